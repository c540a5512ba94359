"""
core/prox.py
Proximity operator in the H^s geometry, the Moreau envelope and the proximal
remainder r^N(x, delta) = delta C^N (Prox(x) - x).

Prox^lam(x) = argmin_p  Psi(p) + ||x - p||_s^2 / (2 lam)

Every shipped Psi is separable in the eigenbasis, so the first-order condition
j^(2s)(p_j - x_j)/lam + dPsi/dp_j = 0 is solved one coordinate at a time:
closed form where Psi is quadratic, safeguarded Newton otherwise.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core.spectral import SpectralVector, apply_cov, sobolev_norm
from core.targets import PsiKind, TargetSpec, curvature_bound, grad_psi, hess_psi_diag, psi

DEFAULT_TOL = 1e-12
MAX_ITER = 100
_MAX_WIDEN = 60
_FLOOR_ULPS = 64


@dataclass
class ProxSolution:
    point: SpectralVector
    residual: float
    iterations: int
    bisections: int = 0

    @property
    def closed_form(self) -> bool:
        return self.iterations == 0


class ProxConvergenceError(RuntimeError):
    """Newton/bisection did not reach tolerance; carries the best iterate."""

    def __init__(self, message: str, best: ProxSolution):
        super().__init__(message)
        self.best = best
        self.residual = best.residual
        self.iterations = best.iterations


def _reference_weights(t: TargetSpec, include_reference: bool) -> np.ndarray:
    # curvature of 1/2 ||p||_C^2 per coordinate, when proxing the full potential
    if include_reference:
        return 1.0 / t.cov.variances
    return np.zeros(t.dim)


def optimality_residual(t: TargetSpec, x: SpectralVector, p: SpectralVector, lam: float,
                        include_reference: bool = False) -> float:
    """||j^(2s)(x - p)/lam - grad f(p)||_{-s}, zero exactly at the prox."""
    w = t.cov.sobolev_weights
    a = _reference_weights(t, include_reference)
    rho = w * (x - p) / lam - a * p - grad_psi(t, p)
    return sobolev_norm(rho, -t.cov.s)


def prox(t: TargetSpec, x: SpectralVector, lam: float, tol: float = DEFAULT_TOL,
         include_reference: bool = False, max_iter: int = MAX_ITER,
         method: str = "auto") -> ProxSolution:
    """Prox of Psi (or of 1/2||.||_C^2 + Psi when include_reference) at x.

    method="newton" skips the closed forms and always runs the iterative solver.

    Success means the reported optimality residual is <= tol; otherwise raises
    ProxConvergenceError carrying the best iterate.
    """
    x = t.cov.check(x)
    if not lam > 0:
        raise ValueError(f"prox parameter lambda must be > 0, got {lam}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if include_reference and not t.cov.product:
        raise ValueError("proxing the full potential needs a product (identity) covariance")
    if method not in ("auto", "newton"):
        raise ValueError(f"unknown prox method '{method}' (expected auto or newton)")

    m6 = curvature_bound(t)
    if m6 > 0 and lam >= 1.0 / (2.0 * m6):
        logging.debug(f"prox: lambda={lam} above the 1/(2 M6)={1.0 / (2.0 * m6):.4g} guarantee")

    w = t.cov.sobolev_weights
    a = _reference_weights(t, include_reference)

    if method == "newton":
        return _newton_prox(t, x, lam, w, a, tol, max_iter)

    if t.psi_kind is PsiKind.ZERO:
        if not include_reference:
            return ProxSolution(point=x.copy(), residual=0.0, iterations=0)
        p = w * x / (w + lam * a)
        return ProxSolution(point=p, residual=optimality_residual(t, x, p, lam, True), iterations=0)

    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        # grad Psi = w p, so the weights cancel unless the reference term is present
        p = x / (1.0 + lam) if not include_reference else w * x / (w + lam * (a + w))
        return ProxSolution(
            point=p, residual=optimality_residual(t, x, p, lam, include_reference), iterations=0
        )

    return _newton_prox(t, x, lam, w, a, tol, max_iter)


def _newton_prox(t: TargetSpec, x: np.ndarray, lam: float, w: np.ndarray, a: np.ndarray,
                 tol: float, max_iter: int) -> ProxSolution:
    include_reference = bool(np.any(a))
    neg_s = -t.cov.s

    def F(p):
        return w * (p - x) / lam + a * p + grad_psi(t, p)

    def dF(p):
        return w / lam + a + hess_psi_diag(t, p)

    # start at the prox of the quadratic part alone and bracket [min(x, p0), max(x, p0)]
    p = w * x / (w + lam * a)
    lo = np.minimum(x, p)
    hi = np.maximum(x, p)
    width = np.maximum(hi - lo, 1.0)
    for _ in range(_MAX_WIDEN):
        f_lo, f_hi = F(lo), F(hi)
        bad_lo, bad_hi = f_lo > 0, f_hi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
    else:
        raise ValueError("prox: could not bracket the optimality condition (is Psi convex?)")

    # a coordinate is frozen once its Newton correction is below the float spacing of p
    frozen = np.zeros(x.size, dtype=bool)
    bisections = 0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        f = F(p)
        if sobolev_norm(f, neg_s) <= tol:
            break
        correction = f / dF(p)
        frozen |= (f == 0.0) | (np.abs(correction) <= 2.0 * np.abs(np.spacing(p)))
        if frozen.all():
            break
        hi = np.where(f > 0, p, hi)
        lo = np.where(f < 0, p, lo)
        step = p - correction
        outside = (step <= lo) | (step >= hi)
        bisections += int(np.count_nonzero(outside & ~frozen))
        p = np.where(frozen, p, np.where(outside, 0.5 * (lo + hi), step))

    residual = optimality_residual(t, x, p, lam, include_reference)
    solution = ProxSolution(point=p, residual=residual, iterations=iterations, bisections=bisections)
    if bisections:
        logging.warning(f"prox: bisection fallback used {bisections} time(s) in {iterations} iterations")
    if not residual <= tol:
        reason = "stalled at float resolution" if frozen.all() else f"not converged in {max_iter} iterations"
        raise ProxConvergenceError(
            f"prox {reason}: residual={residual:.3e} > tol={tol:.1e} "
            f"({int(np.count_nonzero(~frozen))} coordinates still moving)",
            solution,
        )
    return solution


def moreau_envelope(t: TargetSpec, x: SpectralVector, lam: float,
                    include_reference: bool = False) -> float:
    """min_p Psi(p) + ||p - x||_s^2/(2 lam), evaluated at the prox."""
    p = prox(t, x, lam, include_reference=include_reference).point
    value = psi(t, p) + sobolev_norm(p - x, t.cov.s) ** 2 / (2.0 * lam)
    if include_reference:
        value += 0.5 * float(np.sum(p * p / t.cov.variances))
    return value


def log_moreau_target(t: TargetSpec, x: SpectralVector, lam: float) -> float:
    """log of the Moreau-smoothed density: -1/2||x||_C^2 - envelope(x)."""
    x = t.cov.check(x)
    return -0.5 * float(np.sum(x * x / t.cov.variances)) - moreau_envelope(t, x, lam)


def attainable_tol(t: TargetSpec, x: SpectralVector, lam: float, tol: float = DEFAULT_TOL) -> float:
    """tol, raised to the float floor of the optimality residual at x when that is larger.

    Rounding in p - x alone leaves ||F||_{-s} of order eps ||j^(2s) x||_{-s} / lam.
    """
    floor = _FLOOR_ULPS * np.finfo(np.float64).eps * sobolev_norm(t.cov.sobolev_weights * x, -t.cov.s) / lam
    return max(tol, floor)


def prox_remainder(t: TargetSpec, x: SpectralVector, delta: float,
                   tol: float = DEFAULT_TOL) -> SpectralVector:
    """r^N(x, delta) = delta C^N (Prox^delta(x) - x)."""
    p = prox(t, x, delta, tol=tol).point
    return delta * apply_cov(p - x, t.cov, 1)
