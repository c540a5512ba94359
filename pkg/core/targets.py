"""
core/targets.py
Change-of-measure functionals Psi, their gradients, the unnormalised log-density
of pi^N, the Langevin drift mu^N, and exact sampling for the conjugate cases.

Gradients are returned in plain coordinates (the H-gradient), e.g.
grad(1/2 ||x||_s^2) = (j^(2s) x_j)_j.
"""
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np

from core.spectral import CovarianceSpec, SpectralVector, c_norm, sample_reference


class PsiKind(str, Enum):
    ZERO = "zero"
    QUADRATIC_SOBOLEV = "quadratic_sobolev"
    LOG_COSH = "log_cosh"


@dataclass(frozen=True)
class TargetSpec:
    cov: CovarianceSpec
    psi_kind: PsiKind = PsiKind.ZERO
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "psi_kind", PsiKind(self.psi_kind))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.psi_kind is PsiKind.LOG_COSH:
            if not self.weights:
                raise ValueError("log_cosh target needs at least one weight")
            if len(self.weights) > self.cov.dim:
                raise ValueError(
                    f"log_cosh cutoff J={len(self.weights)} exceeds dim N={self.cov.dim}"
                )
            if any(not np.isfinite(w) or w < 0 for w in self.weights):
                raise ValueError("log_cosh weights must be finite and >= 0")
        elif self.weights:
            raise ValueError(f"weights are only meaningful for log_cosh, not {self.psi_kind.value}")

    @property
    def dim(self) -> int:
        return self.cov.dim

    @property
    def is_conjugate(self) -> bool:
        return self.psi_kind in (PsiKind.ZERO, PsiKind.QUADRATIC_SOBOLEV)

    def with_dim(self, dim: int) -> "TargetSpec":
        return TargetSpec(cov=self.cov.with_dim(dim), psi_kind=self.psi_kind, weights=self.weights)

    @cached_property
    def weight_vector(self) -> np.ndarray:
        """LogCosh weights padded with zeros to length N."""
        w = np.zeros(self.dim)
        w[: len(self.weights)] = self.weights
        return w

    def describe(self) -> str:
        base = f"{self.psi_kind.value}(kappa={self.cov.kappa}, s={self.cov.s}, N={self.dim}"
        if self.cov.product:
            base = f"{self.psi_kind.value}(product, N={self.dim}"
        if self.weights:
            base += f", J={len(self.weights)}"
        return base + ")"


def _log_cosh(u: np.ndarray) -> np.ndarray:
    # log cosh u = log(e^u + e^-u) - log 2, overflow-free
    return np.logaddexp(u, -u) - np.log(2.0)


def psi(t: TargetSpec, x: SpectralVector) -> float:
    x = t.cov.check(x)
    if t.psi_kind is PsiKind.ZERO:
        return 0.0
    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        return 0.5 * float(np.sum(t.cov.sobolev_weights * x * x))
    return float(np.sum(t.weight_vector * _log_cosh(x)))


def grad_psi(t: TargetSpec, x: SpectralVector) -> SpectralVector:
    x = t.cov.check(x)
    if t.psi_kind is PsiKind.ZERO:
        return np.zeros_like(x)
    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        return t.cov.sobolev_weights * x
    return t.weight_vector * np.tanh(x)


def hess_psi_diag(t: TargetSpec, x: SpectralVector) -> SpectralVector:
    """Diagonal of the Hessian of Psi (all shipped Psi are coordinate-separable)."""
    x = t.cov.check(x)
    if t.psi_kind is PsiKind.ZERO:
        return np.zeros_like(x)
    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        return t.cov.sobolev_weights.copy()
    return t.weight_vector / np.cosh(x) ** 2


def curvature_bound(t: TargetSpec) -> float:
    """Global bound M6 on the second derivative of Psi in the H^s geometry."""
    if t.psi_kind is PsiKind.ZERO:
        return 0.0
    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        return 1.0
    return float(np.max(t.weight_vector / t.cov.sobolev_weights))


def log_target(t: TargetSpec, x: SpectralVector) -> float:
    """log pi^N(x) up to a constant: -1/2 ||x||_C^2 - Psi(x)."""
    return -0.5 * c_norm(x, t.cov) ** 2 - psi(t, x)


def mu_n(t: TargetSpec, x: SpectralVector) -> SpectralVector:
    """mu^N(x) = -(x + C^N grad Psi(x))."""
    x = t.cov.check(x)
    return -x - t.cov.variances * grad_psi(t, x)


def exact_variances(t: TargetSpec) -> np.ndarray:
    """Coordinate variances of pi^N for the Gaussian-conjugate targets."""
    if t.psi_kind is PsiKind.ZERO:
        return t.cov.variances.copy()
    if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
        return 1.0 / (1.0 / t.cov.variances + t.cov.sobolev_weights)
    raise ValueError(f"no conjugate sampler for {t.psi_kind.value} target; use warm_start")


def exact_sample(t: TargetSpec, rng: np.random.Generator) -> SpectralVector:
    """Exact draw from pi^N (independent Gaussian coordinates)."""
    if t.psi_kind is PsiKind.ZERO:
        return sample_reference(t.cov, rng)
    return np.sqrt(exact_variances(t)) * rng.standard_normal(t.dim)


def exact_samples(t: TargetSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n exact draws stacked as rows, shape (n, N)."""
    return np.sqrt(exact_variances(t)) * rng.standard_normal((n, t.dim))


def make_target(kind: str, dim: int, kappa: float = 1.0, s: float = 0.0,
                weights: Sequence[float] = (), product: bool = False) -> TargetSpec:
    cov = CovarianceSpec.identity(dim) if product else CovarianceSpec(kappa=kappa, s=s, dim=dim)
    return TargetSpec(cov=cov, psi_kind=PsiKind(kind), weights=tuple(weights))
