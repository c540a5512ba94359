"""Tests for the limiting diffusion integrator and the chain comparisons."""

import numpy as np
import pytest

from core.diagnostics import speed_hilbert
from core.samplers import ChainSummary, ProposalConfig, StepRecord, Variant, run_chain, warm_start
from core.sde import (
    ChainInterpolant, SdePath, SdeStabilityError, chain_interpolant, em_stationary_variance,
    integrate, marginal_compare, stability_number,
)
from core.targets import make_target


@pytest.fixture
def scalar_ou():
    return make_target("zero", dim=1, product=True)


class TestIntegrate:
    """Euler-Maruyama paths."""

    def test_stationary_variance(self, scalar_ou, rng):
        h, dt = 1.0, 0.02
        path = integrate(scalar_ou, h, np.zeros(1), dt, 100_000, rng)
        expected = em_stationary_variance(scalar_ou, h, dt)[0]
        assert expected == pytest.approx(1.0 / (1.0 - h * dt / 2.0))
        assert path.coord_var[0] == pytest.approx(expected, rel=0.12)
        assert abs(path.coord_mean[0]) < 0.15

    def test_zero_speed_is_constant(self, qs_target, rng):
        z0 = rng.standard_normal(qs_target.dim)
        path = integrate(qs_target, 0.0, z0, 0.01, 50, rng)
        assert np.all(path.states == z0)
        np.testing.assert_array_equal(path.final, z0)

    def test_stability_guard(self, scalar_ou, rng):
        assert stability_number(scalar_ou, 1.0, 0.3) == pytest.approx(0.6)
        with pytest.raises(SdeStabilityError, match="must be <"):
            integrate(scalar_ou, 1.0, np.zeros(1), 0.3, 10, rng)

    def test_argument_checks(self, scalar_ou, rng):
        with pytest.raises(ValueError, match="h_ell"):
            integrate(scalar_ou, -1.0, np.zeros(1), 0.01, 10, rng)
        with pytest.raises(ValueError, match="dt"):
            integrate(scalar_ou, 1.0, np.zeros(1), 0.0, 10, rng)
        with pytest.raises(ValueError, match="n_steps"):
            integrate(scalar_ou, 1.0, np.zeros(1), 0.01, 0, rng)

    def test_record_every(self, scalar_ou, rng):
        path = integrate(scalar_ou, 1.0, np.zeros(1), 0.01, 100, rng, record_every=10)
        assert path.states.shape == (11, 1)
        np.testing.assert_allclose(np.diff(path.times), 0.1)

    def test_reproducible(self, qs_target):
        a = integrate(qs_target, 0.5, np.zeros(qs_target.dim), 0.01, 200, np.random.default_rng(1))
        b = integrate(qs_target, 0.5, np.zeros(qs_target.dim), 0.01, 200, np.random.default_rng(1))
        np.testing.assert_array_equal(a.final, b.final)

    def test_no_stationary_law_without_speed(self, scalar_ou):
        with pytest.raises(ValueError, match="no stationary law"):
            em_stationary_variance(scalar_ou, 0.0, 0.01)


class TestMarginalCompare:
    """Chain vs diffusion marginals."""

    @staticmethod
    def _summary(var):
        return ChainSummary(n_steps=10, accept_count=5, mean_sq_jump=0.0,
                            coord_mean=np.zeros(2), coord_var=np.asarray(var, dtype=float),
                            final_position=np.zeros(2))

    @staticmethod
    def _path(var):
        return SdePath(times=np.zeros(1), states=np.zeros((1, 2)), h_ell=1.0, dt=0.01,
                       coord_mean=np.zeros(2), coord_var=np.asarray(var, dtype=float))

    def test_relative_gap(self):
        report = marginal_compare(self._summary([1.1, 0.5]), self._path([1.0, 0.5]), [1, 2])
        assert [r.coord for r in report.rows] == [1, 2]
        assert report.rows[0].rel_var_gap == pytest.approx(0.1)
        assert report.max_rel_var_gap == pytest.approx(0.1)

    def test_untracked_coordinate(self):
        with pytest.raises(ValueError, match="was not tracked"):
            marginal_compare(self._summary([1.0, 1.0]), self._path([1.0, 1.0]), [3])


class TestInterpolant:
    """Piecewise-linear chain interpolation."""

    def test_values(self):
        interp = ChainInterpolant(np.array([0.0, 1.0, 3.0]), dt=0.5)
        assert interp.horizon == pytest.approx(1.0)
        assert interp(0.25)[0] == pytest.approx(0.5)
        np.testing.assert_allclose(interp([0.75, 1.0])[:, 0], [2.0, 3.0])

    def test_outside_horizon(self):
        interp = ChainInterpolant(np.array([0.0, 1.0]), dt=0.5)
        with pytest.raises(ValueError, match="outside"):
            interp(0.6)

    def test_needs_two_states(self):
        with pytest.raises(ValueError, match="at least two"):
            ChainInterpolant(np.array([1.0]), dt=0.5)

    def test_from_records(self):
        records = [StepRecord(k, 0.0, True, 0.0, np.full(2, float(k))) for k in (1, 2)]
        interp = chain_interpolant(records, dt=0.1, init=np.zeros(2))
        np.testing.assert_allclose(interp(0.15), [1.5, 1.5])
        stretched = chain_interpolant(records, dt=0.1, stride=10)
        assert stretched.horizon == pytest.approx(1.0)


class TestStationaryMarginals:
    """Chain and diffusion against the exact conjugate law."""

    @pytest.mark.slow
    def test_coordinate_one_variance_matches_exact_law(self, rng):
        """Proximal chain and diffusion both hold coordinate 1 at (lambda_1^-2 + 1)^-1."""
        t = make_target("quadratic_sobolev", dim=64, kappa=1.0, s=0.0)
        expected = 1.0 / (1.0 / t.cov.variances[0] + 1.0)
        assert expected == pytest.approx(0.5)
        cfg = ProposalConfig(Variant.PROX_CANONICAL, ell=1.0, dim=t.dim)
        x0 = warm_start(t, rng)
        summary = run_chain(t, cfg, 200_000, x0, rng)
        assert summary.coord_var[0] == pytest.approx(expected, rel=0.05)
        h = float(speed_hilbert(1.0, Variant.PROX_CANONICAL))
        path = integrate(t, h, x0, 0.005, 2_000_000, rng)
        assert path.coord_var[0] == pytest.approx(expected, rel=0.05)
