"""
core/diagnostics.py
Turns chain output into the scaling quantities: Q^N moments and their Gaussian
limit, the Z^N / i^N / e^N decomposition and its error rates, limiting acceptance
and speed functions, the optimal-ell search, the drift d^N and noise covariance
D^N estimators, and the quantitative probes of the one-step estimates.

Returns structured dataclass objects; persistence lives in core.results_io.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from core.prox import attainable_tol, prox, prox_remainder
from core.samplers import (
    ChainState, ProposalConfig, Variant, log_accept_ratio, mh_step, noise_scale,
    proposal_mean, propose, run_chain, stationary_draws, warm_start,
)
from core.spectral import CovarianceSpec, SpectralVector, sobolev_norm
from core.targets import TargetSpec, grad_psi, mu_n, psi
from core.utils import geometric_slope

ProgressCallback = Callable[[str, Optional[int]], None]
CancelCheck = Callable[[], bool]

MIN_CURVE_STEPS = 10_000
MIN_INNER = 1_000
DEBUG_TERMS_TOL = 1e-10


def _emit(progress_cb: Optional[ProgressCallback], msg: str, pct: Optional[int] = None) -> None:
    if progress_cb:
        progress_cb(msg, pct)


# ---------------------------------------------------------------------------
# Limiting acceptance and speed
# ---------------------------------------------------------------------------

def limit_log_ratio_variance(ell, variant: Variant = Variant.MALA):
    """sigma^2(ell) of the limiting Gaussian log-ratio, whose mean is -sigma^2/2.

    Langevin kernels: ell^3/2. RWM with delta = ell/N: 2 ell.
    ProxMALA_Pereyra gets 9 ell^3/2. That value is a heuristic from the leading terms of the
    product-Gaussian expansion, not a proven limit; qn-moments reports the empirical moments
    next to it.
    """
    ell = np.asarray(ell, dtype=float)
    variant = Variant(variant)
    if variant is Variant.RWM:
        return 2.0 * ell
    if variant is Variant.PROX_PEREYRA:
        return 4.5 * ell ** 3
    return 0.5 * ell ** 3


def limit_acceptance(ell, variant: Variant = Variant.MALA):
    """alpha(ell) = E[1 ^ e^Z], Z ~ N(-sigma^2/2, sigma^2)  =  2 Phi(-sigma/2)."""
    sigma = np.sqrt(limit_log_ratio_variance(ell, variant))
    value = 2.0 * stats.norm.cdf(-0.5 * sigma)
    return float(value) if np.ndim(value) == 0 else value


def limit_acceptance_mc(ell: float, variant: Variant, n: int,
                        rng: np.random.Generator) -> Tuple[float, float]:
    """Direct Monte Carlo of E[1 ^ e^Z]; returns (estimate, standard error)."""
    var = float(limit_log_ratio_variance(ell, variant))
    z = rng.normal(-0.5 * var, math.sqrt(var), size=n)
    a = np.minimum(1.0, np.exp(np.minimum(z, 0.0)))
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(n))


def speed_hilbert(ell, variant: Variant = Variant.MALA):
    """h(ell) = ell * alpha(ell)."""
    return np.asarray(ell, dtype=float) * limit_acceptance(ell, variant)


def speed_product(ell, k: float = 1.0):
    """h(ell) = 2 ell^2 Phi(-(K/2) ell^3), the product-target speed."""
    ell = np.asarray(ell, dtype=float)
    return 2.0 * ell ** 2 * stats.norm.cdf(-0.5 * k * ell ** 3)


def reduced_speed(u, power: float = 2.0 / 3.0):
    """u^power Phi(-u); every speed above is a rescaling of this in u = sigma/2."""
    u = np.asarray(u, dtype=float)
    return u ** power * stats.norm.cdf(-u)


def optimal_limit_acceptance(variant: Variant = Variant.MALA, form: str = "hilbert",
                             k: float = 1.0) -> Tuple[float, float]:
    """(ell*, alpha*) maximising the limiting speed.

    form="hilbert" uses h = ell alpha(ell); form="product" uses speed_product with constant k,
    whose acceptance is 2 Phi(-(k/2) ell^3).
    """
    variant = Variant(variant)
    if form == "hilbert":
        objective = lambda l: -float(speed_hilbert(l, variant))
        hi = 50.0 if variant is Variant.RWM else 10.0
    elif form == "product":
        if not k > 0:
            raise ValueError(f"k must be > 0, got {k}")
        objective = lambda l: -float(speed_product(l, k))
        hi = 10.0 / k ** (1.0 / 3.0)
    else:
        raise ValueError(f"unknown speed form '{form}' (expected hilbert or product)")
    res = minimize_scalar(objective, bounds=(1e-6, hi), method="bounded",
                          options={"xatol": 1e-10})
    ell_star = float(res.x)
    if form == "hilbert":
        return ell_star, float(limit_acceptance(ell_star, variant))
    return ell_star, float(2.0 * stats.norm.cdf(-0.5 * k * ell_star ** 3))


@dataclass
class SpeedCurve:
    ells: np.ndarray
    alphas: np.ndarray
    alpha_se: np.ndarray
    speeds: np.ndarray
    ell_star: float                          # refined on the interpolant
    alpha_at_star: float
    ell_star_grid: float                     # grid argmax of speeds
    on_boundary: bool = False

    @property
    def max_speed(self) -> float:
        return float(np.max(self.speeds))


def refine_speed_optimum(ells: Sequence[float], alphas: Sequence[float],
                         xtol: float = 1e-3) -> Tuple[float, float, bool]:
    """Grid argmax of ell * alpha, refined by golden section on a monotone (PCHIP) fit of alpha.

    Returns (ell_star, alpha_at_star, on_boundary). A boundary maximum is returned unrefined.
    """
    ells = np.asarray(ells, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if ells.size == 0 or ells.size != alphas.size:
        raise ValueError("ells and alphas must be non-empty and of equal length")
    order = np.argsort(ells)
    ells, alphas = ells[order], alphas[order]
    k = int(np.argmax(ells * alphas))
    if k == 0 or k == ells.size - 1:
        logging.warning(f"speed optimum on the grid boundary at ell={ells[k]}")
        return float(ells[k]), float(alphas[k]), True

    fit = PchipInterpolator(ells, alphas)
    try:
        res = minimize_scalar(lambda l: -float(l * fit(l)),
                              bracket=(ells[k - 1], ells[k], ells[k + 1]),
                              method="golden", options={"xtol": xtol})
        ell_star = float(np.clip(res.x, ells[k - 1], ells[k + 1]))
    except ValueError:
        # flat top: the grid point is as good as anything the fit offers
        ell_star = float(ells[k])
    return ell_star, float(fit(ell_star)), False


def acceptance_curve(t: TargetSpec, dim: int, ells: Sequence[float], gamma: float,
                     n_steps: int, rng: np.random.Generator,
                     variant: Variant = Variant.MALA, burn_in: int = 100_000,
                     progress_cb: Optional[ProgressCallback] = None,
                     cancel_check: Optional[CancelCheck] = None) -> SpeedCurve:
    """One stationary chain per ell; acceptance fractions and the speed ell * alpha."""
    if not len(ells):
        raise ValueError("ells grid must be non-empty")
    if n_steps < MIN_CURVE_STEPS:
        raise ValueError(f"n_steps must be >= {MIN_CURVE_STEPS} per ell, got {n_steps}")
    if t.dim != dim:
        t = t.with_dim(dim)
    ells = np.asarray(sorted(float(l) for l in ells))
    alphas = np.empty(ells.size)
    ses = np.empty(ells.size)
    for k, ell in enumerate(ells):
        cfg = ProposalConfig(variant, ell=ell, dim=dim, gamma=gamma)
        x0 = warm_start(t, rng, burn_in)
        summary = run_chain(t, cfg, n_steps, x0, rng, cancel_check=cancel_check)
        alphas[k] = summary.acceptance_rate
        ses[k] = summary.acceptance_se
        _emit(progress_cb, f"ell={ell:g}: acceptance {alphas[k]:.4f}", int(100 * (k + 1) / ells.size))
    ell_star, alpha_star, boundary = refine_speed_optimum(ells, alphas)
    speeds = ells * alphas
    return SpeedCurve(
        ells=ells, alphas=alphas, alpha_se=ses, speeds=speeds,
        ell_star=ell_star, alpha_at_star=alpha_star,
        ell_star_grid=float(ells[int(np.argmax(speeds))]), on_boundary=boundary,
    )


# ---------------------------------------------------------------------------
# Gaussian approximation of Q^N
# ---------------------------------------------------------------------------

@dataclass
class QDecomposition:
    q: float
    z: float
    i: float
    e: float
    terms: Optional[Tuple[float, float, float, float]] = None   # I1..I4 in debug mode


def _whitened(x: np.ndarray, cov: CovarianceSpec) -> np.ndarray:
    return x / cov.eigenvalues


def z_term(cfg: ProposalConfig, x: SpectralVector, xi: np.ndarray, cov: CovarianceSpec) -> float:
    """Z^N = -ell^3/4 - (ell^(3/2)/sqrt 2) N^(-1/2) sum_j xi_j x_j / lambda_j."""
    ell, n = cfg.ell, cfg.dim
    return (-ell ** 3 / 4.0
            - ell ** 1.5 / math.sqrt(2.0) / math.sqrt(n) * float(np.dot(xi, _whitened(x, cov))))


def i_term(cfg: ProposalConfig, x: SpectralVector, xi: np.ndarray, cov: CovarianceSpec) -> float:
    """i^N = 1/2 delta^2 (||x||_C^2 - |xi|^2)."""
    xw = _whitened(x, cov)
    return 0.5 * cfg.delta ** 2 * (float(np.dot(xw, xw)) - float(np.dot(xi, xi)))


def zero_target_e(cfg: ProposalConfig, x: SpectralVector, xi: np.ndarray,
                  cov: CovarianceSpec) -> float:
    """Closed form of e^N for MALA on the Gaussian reference measure itself."""
    d = cfg.delta
    xw = _whitened(x, cov)
    return (-d ** 3 / 4.0 * (float(np.dot(xw, xw)) - cfg.dim)
            + d ** 2.5 / math.sqrt(2.0) * float(np.dot(xw, xi)))


def _check_gamma(cfg: ProposalConfig) -> None:
    if not math.isclose(cfg.gamma, 1.0 / 3.0, rel_tol=1e-12):
        raise ValueError(f"the Z/i decomposition assumes gamma = 1/3, got {cfg.gamma}")


def q_terms(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector,
            y: SpectralVector) -> Tuple[float, float, float, float]:
    """I1..I4 of Q^N(x, y); they sum to log_accept_ratio exactly (up to rounding).

    With g = C grad Psi and e(z) = m(z) - (1 - delta) z + delta g(z) the remainder of the
    proposal mean relative to MALA, A = x - (1-delta) y, B = y - (1-delta) x:
      I1 = -1/2(|y|^2 - |x|^2) - (|A|^2 - |B|^2)/(4 delta)
      I2 = -(Psi(y) - Psi(x)) - 1/2(<A, g_y> - <B, g_x>)
      I3 = -(|delta g_y - e_y|^2 - |delta g_x - e_x|^2)/(4 delta)
      I4 = (<A, e_y> - <B, e_x>)/(2 delta)
    all norms in C^N.
    """
    x = t.cov.check(x)
    y = t.cov.check(y)
    d = cfg.delta
    c = t.cov.variances

    def cn(u):
        return float(np.sum(u * u / c))

    def ci(u, v):
        return float(np.sum(u * v / c))

    gx = c * grad_psi(t, x)
    gy = c * grad_psi(t, y)
    ex = proposal_mean(t, cfg, x) - (1.0 - d) * x + d * gx
    ey = proposal_mean(t, cfg, y) - (1.0 - d) * y + d * gy
    a = x - (1.0 - d) * y
    b = y - (1.0 - d) * x

    i1 = -0.5 * (cn(y) - cn(x)) - (cn(a) - cn(b)) / (4.0 * d)
    i2 = -(psi(t, y) - psi(t, x)) - 0.5 * (ci(a, gy) - ci(b, gx))
    i3 = -(cn(d * gy - ey) - cn(d * gx - ex)) / (4.0 * d)
    i4 = (ci(a, ey) - ci(b, ex)) / (2.0 * d)
    return i1, i2, i3, i4


def qn_sample(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector,
              rng: np.random.Generator, n_inner: int,
              debug_terms: bool = False) -> List[QDecomposition]:
    """n_inner fresh innovations at fixed x: realised Q^N with its Z^N + i^N + e^N split."""
    _check_gamma(cfg)
    if n_inner < 1:
        raise ValueError(f"n_inner must be >= 1, got {n_inner}")
    x = t.cov.check(x)
    mean_x = proposal_mean(t, cfg, x)
    scale = noise_scale(t, cfg)
    out: List[QDecomposition] = []
    for _ in range(n_inner):
        xi = rng.standard_normal(t.dim)
        y = mean_x + scale * xi
        q = log_accept_ratio(t, cfg, x, y, mean_x=mean_x)
        z = z_term(cfg, x, xi, t.cov)
        i = i_term(cfg, x, xi, t.cov)
        terms = None
        if debug_terms:
            terms = q_terms(t, cfg, x, y)
            if abs(sum(terms) - q) > DEBUG_TERMS_TOL * (1.0 + abs(q)):
                raise AssertionError(f"I1..I4 sum {sum(terms)!r} differs from Q {q!r}")
        out.append(QDecomposition(q=q, z=z, i=i, e=q - z - i, terms=terms))
    return out


@dataclass
class ErrorRateFit:
    n_grid: List[int]
    mean_abs_i: List[float]
    mean_abs_e: List[float]
    slope_i: float
    slope_i_se: float
    slope_e: float
    slope_e_se: float

    def interval(self, which: str, z: float = 1.96) -> Tuple[float, float]:
        slope, se = (self.slope_i, self.slope_i_se) if which == "i" else (self.slope_e, self.slope_e_se)
        return slope - z * se, slope + z * se


def _is_geometric(values: Sequence[float]) -> bool:
    ratios = np.asarray(values[1:], dtype=float) / np.asarray(values[:-1], dtype=float)
    return bool(np.all(ratios > 1.0) and np.allclose(ratios, ratios[0], rtol=1e-9))


def error_rate_regression(t: TargetSpec, cfg_template: ProposalConfig, n_grid: Sequence[int],
                          samples_per_n: int, rng: np.random.Generator,
                          burn_in: int = 100_000,
                          progress_cb: Optional[ProgressCallback] = None) -> ErrorRateFit:
    """Slopes of log E|i^N| and log E|e^N| against log N at stationary starts."""
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4:
        raise ValueError(f"error-rate regression needs at least 4 dimensions, got {len(n_grid)}")
    if not _is_geometric(n_grid):
        raise ValueError(f"n_grid must be an increasing geometric sequence, got {n_grid}")
    if samples_per_n < 2:
        raise ValueError(f"samples_per_n must be >= 2, got {samples_per_n}")
    _check_gamma(cfg_template)

    abs_i, abs_e = [], []
    for k, n in enumerate(n_grid):
        tn = t.with_dim(n)
        cfg = cfg_template.with_dim(n)
        xs = stationary_draws(tn, rng, samples_per_n, burn_in=burn_in)
        decs = [qn_sample(tn, cfg, x, rng, 1)[0] for x in xs]
        abs_i.append(float(np.mean([abs(d.i) for d in decs])))
        abs_e.append(float(np.mean([abs(d.e) for d in decs])))
        logging.info(f"error rates: N={n}, E|i|={abs_i[-1]:.4g}, E|e|={abs_e[-1]:.4g}")
        _emit(progress_cb, f"N={n} done", int(100 * (k + 1) / len(n_grid)))

    si, si_se = geometric_slope(n_grid, abs_i)
    se_, se_se = geometric_slope(n_grid, abs_e)
    return ErrorRateFit(n_grid, abs_i, abs_e, si, si_se, se_, se_se)


# ---------------------------------------------------------------------------
# Product-Gaussian log-ratio L_n
# ---------------------------------------------------------------------------

_PRODUCT_VARIANTS = (Variant.MALA, Variant.PROX_PEREYRA)


@dataclass
class LnMoments:
    mean: float
    var: float
    ks_p: float
    n_samples: int

    @property
    def mean_se(self) -> float:
        return math.sqrt(self.var / self.n_samples)

    @property
    def var_se(self) -> float:
        # Gaussian approximation to the sampling error of the variance
        return self.var * math.sqrt(2.0 / (self.n_samples - 1))


def _product_variant(variant: Variant) -> Variant:
    variant = Variant(variant)
    if variant not in _PRODUCT_VARIANTS:
        raise ValueError(f"product-Gaussian L_n is defined for MALA and ProxMALA_Pereyra, not {variant.value}")
    return variant


def product_gaussian_ln_moments(variant: Variant, dim: int, ell: float, n_samples: int,
                                rng: np.random.Generator,
                                gamma: float = 1.0 / 3.0) -> LnMoments:
    """Sample mean, variance and KS p-value (against the fitted normal) of L_n on N(0, I_N)."""
    variant = _product_variant(variant)
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    t = TargetSpec(cov=CovarianceSpec.identity(dim))
    cfg = ProposalConfig(variant, ell=ell, dim=dim, gamma=gamma)
    ln = np.empty(n_samples)
    for k in range(n_samples):
        x = rng.standard_normal(dim)
        y = propose(t, cfg, x, rng)
        ln[k] = log_accept_ratio(t, cfg, x, y)
    mean, sd = float(ln.mean()), float(ln.std(ddof=1))
    ks_p = float(stats.kstest(ln, "norm", args=(mean, sd)).pvalue)
    return LnMoments(mean=mean, var=sd * sd, ks_p=ks_p, n_samples=n_samples)


def product_gaussian_exact_moments(variant: Variant, dim: int, ell: float,
                                   gamma: float = 1.0 / 3.0) -> Tuple[float, float]:
    """Exact finite-N (mean, variance) of L_n for x ~ N(0, I_N).

    MALA:    L = (d^2/2 - d^3/4)|x|^2 - d^(3/2)(1-d)/sqrt2 <x,xi> - d^2/2 |xi|^2
    Pereyra: L = k (|x|^2 - |y|^2),  y = x/(1+d) + sqrt(2d) xi,  k = d(3+2d)/(4(1+d)^2)
    """
    variant = _product_variant(variant)
    n = float(dim)
    d = ell * n ** (-gamma)
    if variant is Variant.MALA:
        a = d ** 2 / 2.0 - d ** 3 / 4.0
        mean = -d ** 3 * n / 4.0
        var = 2.0 * n * a * a + (1.0 - d) ** 2 * d ** 3 * n / 2.0 + d ** 4 * n / 2.0
        return mean, var
    c = 1.0 / (1.0 + d)
    k = d * (3.0 + 2.0 * d) / (4.0 * (1.0 + d) ** 2)
    mean = -n * d ** 3 * (3.0 + 2.0 * d) ** 2 / (4.0 * (1.0 + d) ** 4)
    var = k * k * ((1.0 - c * c) ** 2 * 2.0 * n + 8.0 * c * c * d * n + 8.0 * d * d * n)
    return mean, var


@dataclass
class LnTerms:
    """Summand groups of L_n by power of delta; `rest` is whatever the truncation leaves."""
    d3_2: float
    d2: float
    d5_2: float
    d3: float
    rest: float

    @property
    def total(self) -> float:
        return self.d3_2 + self.d2 + self.d5_2 + self.d3 + self.rest


def ln_expansion_terms(variant: Variant, x: np.ndarray, xi: np.ndarray, delta: float) -> LnTerms:
    """Split the product-Gaussian L_n(x, xi) into its delta^(3/2), ^2, ^(5/2), ^3 groups.

    The first three groups have mean zero under x ~ N(0, I); the delta^3 group carries the
    drift (-N/4 for MALA, -9N/4 for Pereyra).
    """
    variant = _product_variant(variant)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xx, xz, zz = float(x @ x), float(x @ xi), float(xi @ xi)
    d = delta
    r2 = math.sqrt(2.0)
    if variant is Variant.MALA:
        g = (-d ** 1.5 / r2 * xz, d ** 2 / 2.0 * (xx - zz), d ** 2.5 / r2 * xz, -d ** 3 / 4.0 * xx)
        exact = (d ** 2 / 2.0 - d ** 3 / 4.0) * xx - d ** 1.5 * (1.0 - d) / r2 * xz - d ** 2 / 2.0 * zz
    else:
        g = (-3.0 / r2 * d ** 1.5 * xz, 1.5 * d ** 2 * (xx - zz), 7.0 / r2 * d ** 2.5 * xz,
             d ** 3 * (-17.0 / 4.0 * xx + 2.0 * zz))
        c = 1.0 / (1.0 + d)
        k = d * (3.0 + 2.0 * d) / (4.0 * (1.0 + d) ** 2)
        y = c * x + math.sqrt(2.0 * d) * xi
        exact = k * (xx - float(y @ y))
    return LnTerms(*g, rest=exact - sum(g))


# ---------------------------------------------------------------------------
# Drift and noise of the rescaled chain
# ---------------------------------------------------------------------------

def _one_step_displacements(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, n_inner: int,
                            rng: np.random.Generator, force_reject: bool) -> np.ndarray:
    if n_inner < MIN_INNER:
        raise ValueError(f"n_inner must be >= {MIN_INNER}, got {n_inner}")
    start = ChainState.start(t, x)
    start.mean_cache = proposal_mean(t, cfg, start.position)
    out = np.empty((n_inner, t.dim))
    for k in range(n_inner):
        nxt, _ = mh_step(t, cfg, start, rng, force_reject=force_reject)
        out[k] = nxt.position - start.position
    return out


def _h_dt(cfg: ProposalConfig) -> float:
    return float(speed_hilbert(cfg.ell, cfg.variant)) * cfg.dt


def drift_estimate(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, n_inner: int,
                   rng: np.random.Generator, force_reject: bool = False) -> SpectralVector:
    """d^N(x) = E[x' - x] / (h(ell) dt), averaged over n_inner one-step transitions from x."""
    disp = _one_step_displacements(t, cfg, x, n_inner, rng, force_reject)
    return disp.mean(axis=0) / _h_dt(cfg)


def drift_gap_sq(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, n_inner: int,
                 rng: np.random.Generator) -> float:
    """Unbiased estimate of ||d^N(x) - mu(x)||_s^2.

    The squared gap of the averaged drift overshoots by tr_s(Var)/n_inner; that part is
    estimated from the same transitions and subtracted, so small values may come out negative.
    Moments are accumulated on the fly, memory stays O(N).
    """
    if n_inner < MIN_INNER:
        raise ValueError(f"n_inner must be >= {MIN_INNER}, got {n_inner}")
    start = ChainState.start(t, x)
    start.mean_cache = proposal_mean(t, cfg, start.position)
    s1 = np.zeros(t.dim)
    s2 = np.zeros(t.dim)
    for _ in range(n_inner):
        nxt, _ = mh_step(t, cfg, start, rng)
        v = nxt.position - start.position
        s1 += v
        s2 += v * v
    hdt = _h_dt(cfg)
    mean = s1 / n_inner
    var = np.maximum(s2 - n_inner * mean * mean, 0.0) / (n_inner - 1)
    w = t.cov.sobolev_weights
    raw = float(np.sum(w * (mean / hdt - mu_n(t, x)) ** 2))
    return raw - float(np.sum(w * var)) / (hdt * hdt * n_inner)


@dataclass
class NoiseCovariance:
    entries: Dict[Tuple[int, int], float]
    std_errors: Dict[Tuple[int, int], float]
    limits: Dict[Tuple[int, int], float]

    def relative_gap(self, pair: Tuple[int, int]) -> float:
        lim = self.limits[pair]
        if lim == 0:
            return abs(self.entries[pair])
        return abs(self.entries[pair] - lim) / abs(lim)


def noise_covariance(t: TargetSpec, cfg: ProposalConfig, x: SpectralVector, n_inner: int,
                     rng: np.random.Generator, idx_pairs: Iterable[Tuple[int, int]],
                     force_reject: bool = False) -> NoiseCovariance:
    """<phi_i, D^N(x) phi_j>_s in the orthonormal H^s basis phi_j = j^-s e_j (1-based i, j).

    Gamma = (2 h dt)^(-1/2) (x' - x - h dt d^N(x)); the limit is delta_ij lambda_i^2 i^(2s).
    """
    pairs = [(int(i), int(j)) for i, j in idx_pairs]
    for i, j in pairs:
        if not (1 <= i <= t.dim and 1 <= j <= t.dim):
            raise ValueError(f"index pair ({i}, {j}) out of range 1..{t.dim}")
    disp = _one_step_displacements(t, cfg, x, n_inner, rng, force_reject)
    hdt = _h_dt(cfg)
    gamma = (disp - disp.mean(axis=0)) / math.sqrt(2.0 * hdt)
    coords = gamma * t.cov.index ** t.cov.s       # <Gamma, phi_j>_s = j^s Gamma_j
    entries, ses, limits = {}, {}, {}
    for i, j in pairs:
        prod = coords[:, i - 1] * coords[:, j - 1]
        entries[(i, j)] = float(prod.mean())
        ses[(i, j)] = float(prod.std(ddof=1) / math.sqrt(n_inner))
        limits[(i, j)] = float(t.cov.variances[i - 1] * t.cov.sobolev_weights[i - 1]) if i == j else 0.0
    return NoiseCovariance(entries, ses, limits)


@dataclass
class InvarianceProbe:
    coord: int
    ks_p: float
    lag1_autocorr: float
    mean: float
    mean_se: float
    variance_ratio: float                    # empirical / (block dt lambda_j^2 j^(2s))
    n_blocks: int


def invariance_principle_probe(t: TargetSpec, cfg: ProposalConfig, n_steps: int, block: int,
                               rng: np.random.Generator, coords: Sequence[int] = (1,),
                               init: Optional[SpectralVector] = None,
                               burn_in: int = 100_000) -> List[InvarianceProbe]:
    """Block increments of the martingale part W^N of the rescaled chain, per coordinate (1-based).

    The drift is taken at its limit mu(x); increments are checked for normality, zero mean and
    independence at lag one.
    """
    if block < 1 or n_steps < 10 * block:
        raise ValueError(f"need block >= 1 and n_steps >= 10 * block, got {block}, {n_steps}")
    idx = np.asarray([int(c) - 1 for c in coords])
    if np.any(idx < 0) or np.any(idx >= t.dim):
        raise ValueError(f"coords must lie in 1..{t.dim}")
    x0 = warm_start(t, rng, burn_in) if init is None else init
    state = ChainState.start(t, x0)
    hdt = _h_dt(cfg)
    scale = math.sqrt(cfg.dt) / math.sqrt(2.0 * hdt)
    n_blocks = n_steps // block
    incr = np.zeros((n_blocks, idx.size))
    for b in range(n_blocks):
        for _ in range(block):
            before = state.position
            drift = hdt * mu_n(t, before)[idx]
            state, _ = mh_step(t, cfg, state, rng)
            incr[b] += scale * (state.position[idx] - before[idx] - drift)
    sw = t.cov.index[idx] ** t.cov.s
    incr *= sw
    theory = block * cfg.dt * t.cov.variances[idx] * t.cov.sobolev_weights[idx]

    out = []
    for k, c in enumerate(coords):
        col = incr[:, k]
        m, sd = float(col.mean()), float(col.std(ddof=1))
        ks_p = float(stats.kstest(col, "norm", args=(m, sd)).pvalue)
        centred = col - m
        denom = float(centred @ centred)
        rho = float(centred[1:] @ centred[:-1]) / denom if denom > 0 else 0.0
        out.append(InvarianceProbe(
            coord=int(c), ks_p=ks_p, lag1_autocorr=rho, mean=m, mean_se=sd / math.sqrt(n_blocks),
            variance_ratio=sd * sd / float(theory[k]), n_blocks=n_blocks,
        ))
    return out


# ---------------------------------------------------------------------------
# Proximal vs plain MALA, and the one-step estimate probes
# ---------------------------------------------------------------------------

@dataclass
class GapFit:
    deltas: List[float]
    mean_gap: List[float]
    slope: float
    slope_se: float


def prox_mala_gap(t: TargetSpec, deltas: Sequence[float], n_samples: int,
                  rng: np.random.Generator, variant: Variant = Variant.PROX_CANONICAL,
                  burn_in: int = 100_000) -> GapFit:
    """Mean ||y_variant - y_MALA||_s under shared innovations, and its slope in delta."""
    deltas = sorted(float(d) for d in deltas)
    if len(deltas) < 2:
        raise ValueError("need at least two step sizes for a gap slope")
    xs = stationary_draws(t, rng, n_samples, burn_in=burn_in)
    gaps = []
    for d in deltas:
        cfg_p = ProposalConfig.for_delta(variant, d, t.dim)
        cfg_m = ProposalConfig.for_delta(Variant.MALA, d, t.dim)
        total = 0.0
        for x in xs:
            xi = rng.standard_normal(t.dim)
            total += sobolev_norm(propose(t, cfg_p, x, rng, xi) - propose(t, cfg_m, x, rng, xi), t.cov.s)
        gaps.append(total / len(xs))
    slope, se = geometric_slope(deltas, gaps)
    return GapFit(deltas, gaps, slope, se)


@dataclass
class ProbeResult:
    """Fitted constant of a one-step estimate at each dimension."""
    label: str
    dims: List[int]
    constants: List[float]

    @property
    def spread(self) -> float:
        """max/min ratio of the constants across N (1 means perfectly stable)."""
        c = np.asarray(self.constants, dtype=float)
        lo = float(np.min(c))
        return float(np.max(c)) / lo if lo > 0 else math.inf


def prox_displacement_probe(t: TargetSpec, lams: Sequence[float], dims: Sequence[int],
                            n_samples: int, rng: np.random.Generator,
                            burn_in: int = 100_000) -> ProbeResult:
    """max ||Prox(x) - x||_s / (lam (1 + ||x||_s)) over stationary x and the lam grid."""
    consts = []
    for n in dims:
        tn = t.with_dim(int(n))
        worst = 0.0
        for x in stationary_draws(tn, rng, n_samples, burn_in=burn_in):
            xs = sobolev_norm(x, tn.cov.s)
            for lam in lams:
                p = prox(tn, x, lam, tol=attainable_tol(tn, x, lam)).point
                worst = max(worst, sobolev_norm(p - x, tn.cov.s) / (lam * (1.0 + xs)))
        consts.append(worst)
    return ProbeResult("prox_displacement", [int(n) for n in dims], consts)


def remainder_probe(t: TargetSpec, deltas: Sequence[float], dims: Sequence[int],
                    n_samples: int, rng: np.random.Generator,
                    burn_in: int = 100_000) -> ProbeResult:
    """max ||r^N(x, delta)||_s / (delta^2 (1 + ||x||_s))."""
    consts = []
    for n in dims:
        tn = t.with_dim(int(n))
        worst = 0.0
        for x in stationary_draws(tn, rng, n_samples, burn_in=burn_in):
            xs = sobolev_norm(x, tn.cov.s)
            for d in deltas:
                r = prox_remainder(tn, x, d, tol=attainable_tol(tn, x, d))
                worst = max(worst, sobolev_norm(r, tn.cov.s) / (d * d * (1.0 + xs)))
        consts.append(worst)
    return ProbeResult("remainder", [int(n) for n in dims], consts)


def jump_size_probe(t: TargetSpec, variant: Variant, ell: float, dims: Sequence[int],
                    n_samples: int, rng: np.random.Generator,
                    burn_in: int = 100_000) -> ProbeResult:
    """mean ||y - x||_s^2 / (dt (1 + ||x||_s^2)) over stationary x with one proposal each."""
    consts = []
    for n in dims:
        tn = t.with_dim(int(n))
        cfg = ProposalConfig(variant, ell=ell, dim=int(n))
        ratios = []
        for x in stationary_draws(tn, rng, n_samples, burn_in=burn_in):
            y = propose(tn, cfg, x, rng)
            ratios.append(sobolev_norm(y - x, tn.cov.s) ** 2
                          / (cfg.dt * (1.0 + sobolev_norm(x, tn.cov.s) ** 2)))
        consts.append(float(np.mean(ratios)))
    return ProbeResult("jump_size", [int(n) for n in dims], consts)


def a_n_probe(t: TargetSpec, variant: Variant, ell: float, dims: Sequence[int],
              n_samples: int, rng: np.random.Generator,
              burn_in: int = 100_000) -> ProbeResult:
    """mean | ||y||_C^2 - ||y_MALA||_C^2 | / delta^2 under shared innovations."""
    consts = []
    for n in dims:
        tn = t.with_dim(int(n))
        cfg = ProposalConfig(variant, ell=ell, dim=int(n))
        cfg_m = ProposalConfig(Variant.MALA, ell=ell, dim=int(n))
        c = tn.cov.variances
        vals = []
        for x in stationary_draws(tn, rng, n_samples, burn_in=burn_in):
            xi = rng.standard_normal(tn.dim)
            y = propose(tn, cfg, x, rng, xi)
            ym = propose(tn, cfg_m, x, rng, xi)
            vals.append(abs(float(np.sum(y * y / c)) - float(np.sum(ym * ym / c))))
        consts.append(float(np.mean(vals)) / cfg.delta ** 2)
    return ProbeResult("a_n", [int(n) for n in dims], consts)


def local_acceptance_spread(t: TargetSpec, cfg: ProposalConfig, dims: Sequence[int],
                            n_states: int, n_inner: int, rng: np.random.Generator,
                            burn_in: int = 100_000) -> ProbeResult:
    """Standard deviation across stationary x of the local acceptance alpha^N(x) = E_xi[1 ^ e^Q]."""
    consts = []
    for n in dims:
        tn = t.with_dim(int(n))
        cfg_n = cfg.with_dim(int(n))
        alphas = []
        for x in stationary_draws(tn, rng, n_states, burn_in=burn_in):
            mean_x = proposal_mean(tn, cfg_n, x)
            scale = noise_scale(tn, cfg_n)
            acc = 0.0
            for _ in range(n_inner):
                y = mean_x + scale * rng.standard_normal(tn.dim)
                acc += math.exp(min(0.0, log_accept_ratio(tn, cfg_n, x, y, mean_x=mean_x)))
            alphas.append(acc / n_inner)
        consts.append(float(np.std(alphas, ddof=1)))
    return ProbeResult("local_acceptance_spread", [int(n) for n in dims], consts)
