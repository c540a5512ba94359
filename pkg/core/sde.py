"""
core/sde.py
Euler-Maruyama integrator for the limiting diffusion

    dz = -h(ell) (z + C grad Psi(z)) dt + sqrt(2 h(ell)) dW,   Cov(W) = C,

and marginal comparisons between a chain and the diffusion.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from core.samplers import RECORDED_COORDS, ChainSummary, StepRecord
from core.spectral import SpectralVector
from core.targets import TargetSpec, exact_variances, mu_n

STABILITY_LIMIT = 0.5
MAX_STORED = 100_000


class SdeStabilityError(ValueError):
    pass


@dataclass
class SdePath:
    times: np.ndarray                        # uniform, starting at 0
    states: np.ndarray                       # (len(times), N), every record_every-th step
    h_ell: float
    dt: float
    coord_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coord_var: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def final(self) -> SpectralVector:
        return self.states[-1]


def stability_number(t: TargetSpec, h_ell: float, dt: float) -> float:
    """dt h (1 + max_j lambda_j^2 j^(2s)); the explicit scheme needs this below 0.5."""
    return dt * h_ell * (1.0 + float(np.max(t.cov.variances * t.cov.sobolev_weights)))


def integrate(t: TargetSpec, h_ell: float, z0: SpectralVector, dt: float, n_steps: int,
              rng: np.random.Generator, record_every: Optional[int] = None) -> SdePath:
    """z_{k+1} = z_k + h mu(z_k) dt + sqrt(2 h dt) C^(1/2) xi_k.

    Running moments of the first coordinates cover every step; states are kept every
    record_every steps (default: at most MAX_STORED of them).
    """
    if h_ell < 0:
        raise ValueError(f"h_ell must be >= 0, got {h_ell}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    number = stability_number(t, h_ell, dt)
    if number >= STABILITY_LIMIT:
        raise SdeStabilityError(
            f"dt*h*(1 + max lambda_j^2 j^2s) = {number:.4g} must be < {STABILITY_LIMIT}"
        )
    if number > 0.9 * STABILITY_LIMIT:
        logging.warning(f"sde: stability margin below 10% ({number:.4g} of {STABILITY_LIMIT})")

    stride = record_every or max(1, math.ceil(n_steps / MAX_STORED))
    z = t.cov.check(z0).copy()
    noise = math.sqrt(2.0 * h_ell * dt) * t.cov.eigenvalues
    k = min(RECORDED_COORDS, t.dim)
    mean = np.zeros(k)
    m2 = np.zeros(k)
    stored: List[np.ndarray] = [z.copy()]
    for i in range(1, n_steps + 1):
        z = z + h_ell * dt * mu_n(t, z) + noise * rng.standard_normal(t.dim)
        d = z[:k] - mean
        mean += d / i
        m2 += d * (z[:k] - mean)
        if i % stride == 0:
            stored.append(z.copy())

    states = np.asarray(stored)
    times = dt * stride * np.arange(states.shape[0])
    logging.info(f"sde: {n_steps} steps at dt={dt}, h={h_ell:.6g} on {t.describe()}")
    return SdePath(times=times, states=states, h_ell=h_ell, dt=dt,
                   coord_mean=mean, coord_var=m2 / max(n_steps - 1, 1))


def em_stationary_variance(t: TargetSpec, h_ell: float, dt: float) -> np.ndarray:
    """Per-coordinate stationary variance of the discretised scheme (conjugate targets).

    Coordinate j is the AR(1) recursion z' = (1 - a_j dt) z + sqrt(2 h dt) lambda_j xi with
    a_j = h lambda_j^2 / sigma_j^2, giving 2 h lambda_j^2 / (a_j (2 - a_j dt)).
    """
    sigma2 = exact_variances(t)
    if h_ell == 0:
        raise ValueError("h_ell = 0 has no stationary law (the path is constant)")
    a = h_ell * t.cov.variances / sigma2
    return 2.0 * h_ell * t.cov.variances / (a * (2.0 - a * dt))


# ---------------------------------------------------------------------------
# Chain vs diffusion
# ---------------------------------------------------------------------------

@dataclass
class MarginalRow:
    coord: int
    chain_mean: float
    chain_var: float
    sde_mean: float
    sde_var: float

    @property
    def rel_var_gap(self) -> float:
        return abs(self.chain_var - self.sde_var) / self.sde_var if self.sde_var else math.inf


@dataclass
class MarginalReport:
    rows: List[MarginalRow] = field(default_factory=list)

    @property
    def max_rel_var_gap(self) -> float:
        return max((r.rel_var_gap for r in self.rows), default=0.0)


def marginal_compare(chain_summary: ChainSummary, sde_path: SdePath,
                     coords: Sequence[int]) -> MarginalReport:
    """Stationary mean and variance of chosen coordinates (1-based), chain vs diffusion."""
    report = MarginalReport()
    limit = min(chain_summary.coord_mean.size, sde_path.coord_mean.size)
    for c in coords:
        j = int(c) - 1
        if not 0 <= j < limit:
            raise ValueError(f"coordinate {c} was not tracked (only 1..{limit} are)")
        report.rows.append(MarginalRow(
            coord=int(c),
            chain_mean=float(chain_summary.coord_mean[j]),
            chain_var=float(chain_summary.coord_var[j]),
            sde_mean=float(sde_path.coord_mean[j]),
            sde_var=float(sde_path.coord_var[j]),
        ))
    return report


class ChainInterpolant:
    """z^N(t) = (t/dt - k) x^(k+1) + (k + 1 - t/dt) x^k on [k dt, (k+1) dt]."""

    def __init__(self, positions: np.ndarray, dt: float):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.shape[0] < 2:
            raise ValueError("an interpolant needs at least two chain states")
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self.positions = positions
        self.dt = dt

    @property
    def horizon(self) -> float:
        return self.dt * (self.positions.shape[0] - 1)

    def __call__(self, t_value) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t_value, dtype=float))
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon * (1 + 1e-12)):
            raise ValueError(f"time outside [0, {self.horizon}]")
        grid = self.dt * np.arange(self.positions.shape[0])
        out = np.column_stack([np.interp(t_arr, grid, self.positions[:, j])
                               for j in range(self.positions.shape[1])])
        return out[0] if np.ndim(t_value) == 0 else out


def chain_interpolant(records: Sequence[StepRecord], dt: float, stride: int = 1,
                      init: Optional[np.ndarray] = None) -> ChainInterpolant:
    """Interpolant of the recorded coordinates in time units dt per chain step.

    With a subsampling recorder each stored record is stride steps apart.
    """
    rows = [r.coords for r in records]
    if init is not None:
        rows.insert(0, np.asarray(init, dtype=float)[:len(rows[0]) if rows else RECORDED_COORDS])
    return ChainInterpolant(np.asarray(rows), dt * stride)
