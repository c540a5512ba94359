"""
core/spectral.py
Finite-dimensional Karhunen-Loeve representation: coordinates, weighted norms,
diagonal covariance operators and reference-measure sampling.

Every operator in play is diagonal in the eigenbasis, so a state is just its
coordinate vector x_j = <x, phi_j>, j = 1..N.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Coordinates in the eigenbasis; 1-D float64 array of length N.
SpectralVector = np.ndarray


@dataclass(frozen=True)
class CovarianceSpec:
    """Reference covariance C with eigenvalues lambda_j^2, lambda_j = j^-kappa.

    product=True selects the identity spectrum (lambda_j = 1, s = 0): the
    standard product-Gaussian reference used for the finite-dimensional
    experiments.
    """
    kappa: float
    s: float
    dim: int
    product: bool = False

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.product:
            if self.s != 0:
                raise ValueError(f"product covariance requires s = 0, got s={self.s}")
            return
        if not self.kappa > 0.5:
            raise ValueError(f"kappa must be > 1/2, got {self.kappa}")
        if not (0 <= self.s < self.kappa - 0.5):
            raise ValueError(
                f"s must satisfy 0 <= s < kappa - 1/2 = {self.kappa - 0.5}, got {self.s}"
            )

    @classmethod
    def identity(cls, dim: int) -> "CovarianceSpec":
        return cls(kappa=0.0, s=0.0, dim=dim, product=True)

    def with_dim(self, dim: int) -> "CovarianceSpec":
        return CovarianceSpec(kappa=self.kappa, s=self.s, dim=dim, product=self.product)

    @cached_property
    def index(self) -> np.ndarray:
        """j = 1..N as floats."""
        return np.arange(1, self.dim + 1, dtype=np.float64)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """lambda_j (square roots of the eigenvalues of C)."""
        if self.product:
            return np.ones(self.dim)
        return self.index ** (-self.kappa)

    @cached_property
    def variances(self) -> np.ndarray:
        """lambda_j^2, the diagonal of C^N."""
        return self.eigenvalues ** 2

    @cached_property
    def sobolev_weights(self) -> np.ndarray:
        """j^(2s), the H^s coordinate weights."""
        return self.index ** (2.0 * self.s)

    def check(self, x: SpectralVector) -> SpectralVector:
        """Validate a state against this truncation; returns it as float64."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: expected ({self.dim},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("state has non-finite coordinates")
        return x


def sobolev_weights(n: int, r: float) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64) ** (2.0 * r)


def sobolev_norm(x: SpectralVector, r: float) -> float:
    """(sum_j j^(2r) x_j^2)^(1/2); r = 0 is the H-norm."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.sum(sobolev_weights(x.size, r) * x * x)))


def sobolev_inner(u: SpectralVector, v: SpectralVector, r: float) -> float:
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(sobolev_weights(u.size, r) * u * np.asarray(v, dtype=np.float64)))


def c_norm(x: SpectralVector, spec: CovarianceSpec) -> float:
    """Cameron-Martin norm (sum_j lambda_j^-2 x_j^2)^(1/2)."""
    x = spec.check(x)
    return float(np.sqrt(np.sum(x * x / spec.variances)))


def c_inner(u: SpectralVector, v: SpectralVector, spec: CovarianceSpec) -> float:
    """<u, C^-1 v>."""
    return float(np.sum(spec.check(u) * spec.check(v) / spec.variances))


def apply_cov(x: SpectralVector, spec: CovarianceSpec, power: float) -> SpectralVector:
    """Multiply coordinate j by (lambda_j^2)^power: C^N for 1, (C^N)^(1/2) for 1/2, inverse for -1."""
    x = spec.check(x)
    if power == 1:
        return x * spec.variances
    if power == 0.5:
        return x * spec.eigenvalues
    if power == -1:
        return x / spec.variances
    return x * spec.variances ** power


def sample_reference(spec: CovarianceSpec, rng: np.random.Generator) -> SpectralVector:
    """Draw x ~ N(0, C^N): x_j = lambda_j xi_j."""
    return spec.eigenvalues * rng.standard_normal(spec.dim)


def trace_cs(spec: CovarianceSpec) -> float:
    """Truncated trace of C_s in H^s: sum_{j<=N} lambda_j^2 j^(2s)."""
    return float(np.sum(spec.variances * spec.sobolev_weights))
