"""Tests for the change-of-measure functionals and exact sampling."""

import numpy as np
import pytest

from core.spectral import CovarianceSpec, sobolev_norm
from core.targets import (
    PsiKind, TargetSpec, curvature_bound, exact_sample, exact_samples, exact_variances,
    grad_psi, hess_psi_diag, log_target, make_target, mu_n, psi,
)


def _numeric_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestTargetSpec:
    """Validation of Psi parameters."""

    def test_log_cosh_needs_weights(self, sobolev_cov):
        with pytest.raises(ValueError, match="at least one weight"):
            TargetSpec(cov=sobolev_cov, psi_kind=PsiKind.LOG_COSH)

    def test_log_cosh_cutoff_bounded_by_dim(self):
        cov = CovarianceSpec(kappa=1.0, s=0.0, dim=2)
        with pytest.raises(ValueError, match="exceeds dim"):
            TargetSpec(cov=cov, psi_kind="log_cosh", weights=(1.0, 1.0, 1.0))

    def test_log_cosh_rejects_negative_weight(self, sobolev_cov):
        with pytest.raises(ValueError, match="finite and >= 0"):
            TargetSpec(cov=sobolev_cov, psi_kind="log_cosh", weights=(1.0, -0.5))

    def test_weights_rejected_for_other_kinds(self, sobolev_cov):
        with pytest.raises(ValueError, match="only meaningful for log_cosh"):
            TargetSpec(cov=sobolev_cov, psi_kind="quadratic_sobolev", weights=(1.0,))

    def test_kind_coerced_from_string(self, sobolev_cov):
        t = TargetSpec(cov=sobolev_cov, psi_kind="zero")
        assert t.psi_kind is PsiKind.ZERO
        assert t.is_conjugate

    def test_weight_vector_padded(self, logcosh_target):
        w = logcosh_target.weight_vector
        assert w.shape == (logcosh_target.dim,)
        np.testing.assert_array_equal(w[:4], [1.0, 0.5, 0.25, 0.0])

    def test_with_dim(self, logcosh_target):
        bigger = logcosh_target.with_dim(32)
        assert bigger.dim == 32
        assert bigger.weights == logcosh_target.weights

    def test_describe(self, product_target, logcosh_target):
        assert product_target.describe() == "zero(product, N=16)"
        assert logcosh_target.describe().endswith("J=3)")


class TestPsi:
    """Values, gradients and curvature of each Psi."""

    def test_zero(self, zero_target, rng):
        x = rng.standard_normal(zero_target.dim)
        assert psi(zero_target, x) == 0.0
        np.testing.assert_array_equal(grad_psi(zero_target, x), np.zeros_like(x))

    def test_quadratic_value(self, qs_target):
        x = np.ones(qs_target.dim)
        expected = 0.5 * float(np.sum(np.arange(1, 17) ** 0.5))
        assert psi(qs_target, x) == pytest.approx(expected)

    @pytest.mark.parametrize("fixture", ["qs_target", "logcosh_target"])
    def test_gradient_matches_finite_difference(self, fixture, request, rng):
        t = request.getfixturevalue(fixture)
        x = rng.standard_normal(t.dim)
        np.testing.assert_allclose(grad_psi(t, x), _numeric_grad(lambda z: psi(t, z), x),
                                   rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("fixture", ["qs_target", "logcosh_target"])
    def test_hessian_matches_finite_difference(self, fixture, request, rng):
        t = request.getfixturevalue(fixture)
        x = rng.standard_normal(t.dim)
        h = 1e-6
        numeric = (grad_psi(t, x + h) - grad_psi(t, x - h)) / (2 * h)
        np.testing.assert_allclose(hess_psi_diag(t, x), numeric, rtol=1e-5, atol=1e-8)

    def test_log_cosh_large_argument_is_finite(self, logcosh_target):
        x = np.full(logcosh_target.dim, 1e4)
        assert np.isfinite(psi(logcosh_target, x))

    def test_curvature_bounds(self, zero_target, qs_target, logcosh_target):
        assert curvature_bound(zero_target) == 0.0
        assert curvature_bound(qs_target) == 1.0
        # max(1/1, 0.5/2^0.5, 0.25/3^0.5)
        assert curvature_bound(logcosh_target) == pytest.approx(1.0)


class TestDrift:
    """log pi^N and mu^N."""

    def test_mu_is_preconditioned_gradient(self, logcosh_target, rng):
        t = logcosh_target
        x = rng.standard_normal(t.dim) * t.cov.eigenvalues
        grad = _numeric_grad(lambda z: log_target(t, z), x)
        np.testing.assert_allclose(mu_n(t, x), t.cov.variances * grad, rtol=1e-5, atol=1e-7)

    def test_zero_target_drift(self, zero_target, rng):
        x = rng.standard_normal(zero_target.dim)
        np.testing.assert_allclose(mu_n(zero_target, x), -x)

    @pytest.mark.parametrize("kind", ["quadratic_sobolev", "log_cosh"])
    def test_drift_lipschitz_uniform_in_dim(self, kind, rng):
        for dim in (64, 256, 1024):
            weights = (1.0, 0.5, 0.25) if kind == "log_cosh" else ()
            t = make_target(kind, dim=dim, kappa=1.0, s=0.25, weights=weights)
            for _ in range(20):
                x = 3.0 * rng.standard_normal(dim) * t.cov.eigenvalues
                y = 3.0 * rng.standard_normal(dim) * t.cov.eigenvalues
                gap = sobolev_norm(mu_n(t, x) - mu_n(t, y), 0.25)
                assert gap <= 2.0 * sobolev_norm(x - y, 0.25) + 1e-12

    @pytest.mark.parametrize("kind", ["quadratic_sobolev", "log_cosh"])
    def test_gradient_growth_constant_stable_in_dim(self, kind, rng):
        """max ||grad Psi(x)||_{-s} / (1 + ||x||_s) over draws barely moves with N."""
        fitted = []
        for dim in (64, 256, 1024):
            weights = (1.0, 0.5, 0.25) if kind == "log_cosh" else ()
            t = make_target(kind, dim=dim, kappa=1.0, s=0.25, weights=weights)
            ratios = []
            for _ in range(200):
                x = 3.0 * rng.standard_normal(dim) * t.cov.eigenvalues
                ratios.append(sobolev_norm(grad_psi(t, x), -0.25) / (1.0 + sobolev_norm(x, 0.25)))
            fitted.append(max(ratios))
        assert max(fitted) <= 1.0 + 1e-12
        assert max(fitted) / min(fitted) < 1.5


class TestConvexity:
    """Psi is convex along random chords."""

    @pytest.mark.parametrize("fixture", ["zero_target", "qs_target", "logcosh_target"])
    def test_chord_above_graph(self, fixture, request, rng):
        t = request.getfixturevalue(fixture)
        for _ in range(1000):
            x = 2.0 * rng.standard_normal(t.dim)
            y = 2.0 * rng.standard_normal(t.dim)
            lam = rng.uniform()
            mid = psi(t, lam * x + (1 - lam) * y)
            assert mid <= lam * psi(t, x) + (1 - lam) * psi(t, y) + 1e-10


class TestExactSampling:
    """Conjugate targets sample exactly; LogCosh does not."""

    def test_quadratic_variances(self, qs_target):
        j = np.arange(1, qs_target.dim + 1, dtype=float)
        np.testing.assert_allclose(exact_variances(qs_target), 1.0 / (j ** 2 + j ** 0.5))

    def test_log_cosh_has_no_exact_sampler(self, logcosh_target):
        with pytest.raises(ValueError, match="use warm_start"):
            exact_variances(logcosh_target)

    def test_exact_samples_moments(self, qs_target, rng):
        draws = exact_samples(qs_target, rng, 20000)
        assert draws.shape == (20000, qs_target.dim)
        np.testing.assert_allclose(draws[:, :3].var(axis=0), exact_variances(qs_target)[:3], rtol=0.05)

    def test_exact_sample_shape(self, zero_target, rng):
        assert exact_sample(zero_target, rng).shape == (zero_target.dim,)

    def test_make_target_product(self):
        t = make_target("zero", dim=8, product=True)
        assert t.cov.product and t.dim == 8
