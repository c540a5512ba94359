"""
core/samplers.py
Proposal kernels (RWM, MALA and three proximal MALA forms), their log-densities,
the log acceptance ratio Q^N, the Metropolis-Hastings step and the chain driver.

All kernels share the innovation sqrt(2 delta) (C^N)^(1/2) xi and differ only in
their mean m(x):

    RWM                 x
    MALA                x + delta mu^N(x)
    ProxMALA_Canonical  x + delta mu^N(x) + r^N(x, delta)
    ProxMALA_Direct     (1 - delta - C^N) x + C^N Prox^delta_Psi(x)
    ProxMALA_Pereyra    Prox^delta_f(x),  f = 1/2 ||.||_C^2 + Psi   (product covariance only)
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.prox import attainable_tol, prox, prox_remainder
from core.spectral import SpectralVector, sample_reference
from core.targets import TargetSpec, exact_sample, exact_samples, log_target, mu_n

ProgressCallback = Callable[[str, Optional[int]], None]
CancelCheck = Callable[[], bool]

RECORDED_COORDS = 8
MAX_RECORDS = 100_000
DEFAULT_BURN_IN = 100_000
MIN_BURN_IN = 10_000
_CANCEL_EVERY = 1000


class Variant(str, Enum):
    RWM = "RWM"
    MALA = "MALA"
    PROX_CANONICAL = "ProxMALA_Canonical"
    PROX_DIRECT = "ProxMALA_Direct"
    PROX_PEREYRA = "ProxMALA_Pereyra"

    @property
    def is_prox(self) -> bool:
        return self in (Variant.PROX_CANONICAL, Variant.PROX_DIRECT, Variant.PROX_PEREYRA)

    @property
    def is_langevin(self) -> bool:
        return self is not Variant.RWM


# ---------------------------------------------------------------------------
# Configuration and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProposalConfig:
    """Proposal tuning: delta = ell * N^-gamma, time step dt = N^-gamma."""
    variant: Variant
    ell: float
    dim: int
    gamma: float = 1.0 / 3.0
    prox_lambda: Optional[float] = None     # experimental, Pereyra only
    include_normalizer: bool = False        # debug: keep the Gaussian normaliser in log T

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.ell > 0:
            raise ValueError(f"ell must be > 0, got {self.ell}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.prox_lambda is not None:
            if self.variant is not Variant.PROX_PEREYRA:
                raise ValueError("prox_lambda override is only available for ProxMALA_Pereyra")
            if not self.prox_lambda > 0:
                raise ValueError(f"prox_lambda must be > 0, got {self.prox_lambda}")
            logging.warning(f"experimental: Pereyra proposal with lambda={self.prox_lambda} != delta")

    @property
    def dt(self) -> float:
        return float(self.dim) ** (-self.gamma)

    @property
    def delta(self) -> float:
        return self.ell * self.dt

    @classmethod
    def for_delta(cls, variant: Variant, delta: float, dim: int,
                  gamma: float = 1.0 / 3.0) -> "ProposalConfig":
        """Config whose step is delta (up to rounding) at dimension dim."""
        return cls(variant, ell=delta * float(dim) ** gamma, dim=dim, gamma=gamma)

    def with_dim(self, dim: int) -> "ProposalConfig":
        return ProposalConfig(self.variant, self.ell, dim, self.gamma, self.prox_lambda,
                              self.include_normalizer)

    def with_ell(self, ell: float) -> "ProposalConfig":
        return ProposalConfig(self.variant, ell, self.dim, self.gamma, self.prox_lambda,
                              self.include_normalizer)


@dataclass
class ChainState:
    position: SpectralVector
    log_target_cache: float
    step_index: int = 0
    accept_count: int = 0
    mean_cache: Optional[SpectralVector] = None     # m(position) under the chain's own config

    @classmethod
    def start(cls, t: TargetSpec, x: SpectralVector) -> "ChainState":
        x = t.cov.check(x).copy()
        return cls(position=x, log_target_cache=log_target(t, x))


@dataclass
class StepRecord:
    step: int
    q: float
    accepted: bool
    jump_norm_s: float                       # ||y - x||_s of the proposal
    coords: np.ndarray                       # first RECORDED_COORDS coordinates after the step
    innovation: Optional[np.ndarray] = None


@dataclass
class Recorder:
    """Keeps every stride-th StepRecord (stride 1 keeps all)."""
    stride: int = 1
    keep_innovations: bool = False
    records: List[StepRecord] = field(default_factory=list)

    @classmethod
    def for_steps(cls, n_steps: int, max_records: int = MAX_RECORDS,
                  keep_innovations: bool = False) -> "Recorder":
        return cls(stride=max(1, math.ceil(n_steps / max_records)), keep_innovations=keep_innovations)

    def accept(self, record: StepRecord) -> None:
        if record.step % self.stride:
            return
        if not self.keep_innovations:
            record.innovation = None
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ChainSummary:
    n_steps: int
    accept_count: int
    mean_sq_jump: float                      # E||x_{k+1} - x_k||_s^2 over realised moves
    coord_mean: np.ndarray
    coord_var: np.ndarray
    final_position: SpectralVector
    delta: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.n_steps

    @property
    def acceptance_se(self) -> float:
        a = self.acceptance_rate
        return math.sqrt(max(a * (1.0 - a), 0.0) / self.n_steps)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _s_norm_sq(t: TargetSpec, v: np.ndarray) -> float:
    return float(np.sum(t.cov.sobolev_weights * v * v))


def _c_norm_sq(t: TargetSpec, v: np.ndarray) -> float:
    return float(np.sum(v * v / t.cov.variances))


def _check_pair(t: TargetSpec, cfg: ProposalConfig) -> None:
    if cfg.dim != t.dim:
        raise ValueError(f"dimension mismatch: proposal dim {cfg.dim} vs target dim {t.dim}")
    if cfg.variant is Variant.PROX_PEREYRA and not t.cov.product:
        raise ValueError("ProxMALA_Pereyra requires a product (identity) covariance target")


def proposal_mean(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector) -> SpectralVector:
    """m(x), the centre of the Gaussian proposal from x."""
    _check_pair(t, cfg)
    x = t.cov.check(x)
    delta = cfg.delta
    v = cfg.variant
    if v is Variant.RWM:
        return x.copy()
    if v is Variant.MALA:
        return x + delta * mu_n(t, x)
    if v is Variant.PROX_CANONICAL:
        return x + delta * mu_n(t, x) + prox_remainder(t, x, delta, tol=attainable_tol(t, x, delta))
    if v is Variant.PROX_DIRECT:
        # (1 - delta - C) x + C Prox(x), arranged so that Prox(x) = x reproduces MALA exactly
        p = prox(t, x, delta, tol=attainable_tol(t, x, delta)).point
        return x + delta * (-x) + t.cov.variances * (p - x)
    lam = cfg.prox_lambda or delta
    p = prox(t, x, lam, tol=attainable_tol(t, x, lam), include_reference=True).point
    if cfg.prox_lambda is None:
        return p
    return (1.0 - delta / lam) * x + (delta / lam) * p


def noise_scale(t: TargetSpec, cfg: ProposalConfig) -> np.ndarray:
    """Per-coordinate standard deviation sqrt(2 delta) lambda_j of the innovation."""
    return math.sqrt(2.0 * cfg.delta) * t.cov.eigenvalues


def propose(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, rng: np.random.Generator,
            xi: Optional[np.ndarray] = None) -> SpectralVector:
    """Draw y = m(x) + sqrt(2 delta) C^(1/2) xi; pass xi to share innovations across variants."""
    if xi is None:
        xi = rng.standard_normal(t.dim)
    return proposal_mean(t, cfg, x) + noise_scale(t, cfg) * xi


def _log_density_from_mean(t: TargetSpec, cfg: ProposalConfig, to: np.ndarray,
                           mean: np.ndarray) -> float:
    value = -_c_norm_sq(t, to - mean) / (4.0 * cfg.delta)
    if cfg.include_normalizer:
        value -= 0.5 * float(np.sum(np.log(4.0 * math.pi * cfg.delta * t.cov.variances)))
    return value


def log_proposal_density(t: TargetSpec, cfg: ProposalConfig, frm: SpectralVector,
                         to: SpectralVector) -> float:
    """log T(frm, to) = -||to - m(frm)||_C^2 / (4 delta), normaliser dropped unless requested."""
    to = t.cov.check(to)
    return _log_density_from_mean(t, cfg, to, proposal_mean(t, cfg, frm))


def log_accept_ratio(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, y: SpectralVector,
                     mean_x: Optional[np.ndarray] = None, mean_y: Optional[np.ndarray] = None,
                     log_target_x: Optional[float] = None) -> float:
    """Q^N = log pi(y) - log pi(x) + log T(y, x) - log T(x, y).

    Precomputed means and log pi(x) may be passed in to avoid recomputing prox.
    """
    x = t.cov.check(x)
    y = t.cov.check(y)
    if mean_x is None:
        mean_x = proposal_mean(t, cfg, x)
    if mean_y is None:
        mean_y = proposal_mean(t, cfg, y)
    lx = log_target(t, x) if log_target_x is None else log_target_x
    return (
        log_target(t, y) - lx
        + _log_density_from_mean(t, cfg, x, mean_y)
        - _log_density_from_mean(t, cfg, y, mean_x)
    )


def mh_step(t: TargetSpec, cfg: ProposalConfig, state: ChainState, rng: np.random.Generator,
            force_reject: bool = False) -> Tuple[ChainState, StepRecord]:
    """One Metropolis-Hastings transition. Consumes N normals then one uniform."""
    x = state.position
    mean_x = state.mean_cache if state.mean_cache is not None else proposal_mean(t, cfg, x)
    xi = rng.standard_normal(t.dim)
    y = mean_x + noise_scale(t, cfg) * xi
    mean_y = proposal_mean(t, cfg, y)
    log_pi_y = log_target(t, y)
    q = (
        log_pi_y - state.log_target_cache
        + _log_density_from_mean(t, cfg, x, mean_y)
        - _log_density_from_mean(t, cfg, y, mean_x)
    )
    u = rng.random()
    accepted = (not force_reject) and u < math.exp(min(0.0, q))

    if accepted:
        new_state = ChainState(y, log_pi_y, state.step_index + 1, state.accept_count + 1, mean_y)
    else:
        new_state = ChainState(x, state.log_target_cache, state.step_index + 1,
                               state.accept_count, mean_x)
    record = StepRecord(
        step=new_state.step_index,
        q=float(q),
        accepted=bool(accepted),
        jump_norm_s=math.sqrt(_s_norm_sq(t, y - x)),
        coords=new_state.position[:RECORDED_COORDS].copy(),
        innovation=xi,
    )
    return new_state, record


def _emit(progress_cb: Optional[ProgressCallback], msg: str, pct: Optional[int] = None) -> None:
    if progress_cb:
        progress_cb(msg, pct)


def run_chain(t: TargetSpec, cfg: ProposalConfig, n_steps: int, init: SpectralVector,
              rng: np.random.Generator, recorder: Optional[Recorder] = None,
              progress_cb: Optional[ProgressCallback] = None,
              cancel_check: Optional[CancelCheck] = None,
              debug: bool = False) -> ChainSummary:
    """Iterate mh_step n_steps times from init, streaming records to the recorder."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    _check_pair(t, cfg)
    state = ChainState.start(t, init)
    k = min(RECORDED_COORDS, t.dim)
    mean = np.zeros(k)
    m2 = np.zeros(k)
    sq_jump = 0.0
    report_every = max(1, n_steps // 20)

    logging.info(f"run_chain: {cfg.variant.value} on {t.describe()}, ell={cfg.ell}, "
                 f"delta={cfg.delta:.6g}, steps={n_steps}")
    for i in range(1, n_steps + 1):
        if cancel_check and i % _CANCEL_EVERY == 0 and cancel_check():
            raise InterruptedError(f"chain cancelled at step {i}")
        before = state.position
        state, record = mh_step(t, cfg, state, rng)
        if record.accepted:
            sq_jump += _s_norm_sq(t, state.position - before)
        if recorder is not None:
            recorder.accept(record)
        # Welford running moments on the leading coordinates
        d = state.position[:k] - mean
        mean += d / i
        m2 += d * (state.position[:k] - mean)
        if debug and not math.isclose(state.log_target_cache, log_target(t, state.position),
                                      rel_tol=1e-12, abs_tol=1e-9):
            raise RuntimeError(f"log-target cache out of sync at step {i}")
        if i % report_every == 0:
            _emit(progress_cb, f"step {i}/{n_steps}, acceptance {state.accept_count / i:.3f}",
                  int(100 * i / n_steps))

    summary = ChainSummary(
        n_steps=n_steps,
        accept_count=state.accept_count,
        mean_sq_jump=sq_jump / n_steps,
        coord_mean=mean,
        coord_var=m2 / max(n_steps - 1, 1),
        final_position=state.position,
        delta=cfg.delta,
    )
    logging.info(f"run_chain: done, acceptance={summary.acceptance_rate:.4f}")
    return summary


def warm_start(t: TargetSpec, rng: np.random.Generator, burn_in: int = DEFAULT_BURN_IN,
               progress_cb: Optional[ProgressCallback] = None,
               cancel_check: Optional[CancelCheck] = None) -> SpectralVector:
    """A draw from (approximately) pi^N: exact for conjugate targets, MALA burn-in otherwise."""
    if t.is_conjugate:
        return exact_sample(t, rng)
    if burn_in < MIN_BURN_IN:
        raise ValueError(f"burn_in must be >= {MIN_BURN_IN}, got {burn_in}")
    cfg = ProposalConfig(Variant.MALA, ell=1.0, dim=t.dim)
    x0 = sample_reference(t.cov, rng)
    logging.info(f"warm_start: {burn_in} MALA steps on {t.describe()}")
    summary = run_chain(t, cfg, burn_in, x0, rng, progress_cb=progress_cb, cancel_check=cancel_check)
    return summary.final_position


def stationary_draws(t: TargetSpec, rng: np.random.Generator, n: int,
                     burn_in: int = DEFAULT_BURN_IN, thin: int = 100) -> np.ndarray:
    """n (approximately) independent draws from pi^N, shape (n, N).

    Conjugate targets are sampled exactly; otherwise one warm-started MALA chain is thinned.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if t.is_conjugate:
        return exact_samples(t, rng, n)
    state = ChainState.start(t, warm_start(t, rng, burn_in))
    cfg = ProposalConfig(Variant.MALA, ell=1.0, dim=t.dim)
    out = np.empty((n, t.dim))
    for k in range(n):
        for _ in range(thin):
            state, _ = mh_step(t, cfg, state, rng)
        out[k] = state.position
    return out
