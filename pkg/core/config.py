"""
core/config.py
Run configuration: TOML file -> validated pydantic models -> library objects.

Sections: [target] [sampler] [run] [sweep] [diagnose]. Unknown keys are rejected,
and every model re-checks the library preconditions before a run starts.
"""
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # Python 3.10: tomli is the backport that became stdlib tomllib
    import tomli as tomllib
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.samplers import DEFAULT_BURN_IN, ProposalConfig, Variant
from core.spectral import CovarianceSpec
from core.sweep import (
    DEFAULT_DIAG_SAMPLES, DEFAULT_ELL_GRID, DEFAULT_N_GRID, ONE_THIRD, SweepPlan,
)
from core.targets import PsiKind, TargetSpec
from core.utils import sha256_text

DIAGNOSTICS = ("qn-moments", "error-rates", "drift", "noise-cov", "sde-compare", "prox-check",
               "prox-gap", "invariance", "acceptance-curve")
DiagnosticName = Literal["qn-moments", "error-rates", "drift", "noise-cov", "sde-compare", "prox-check",
                         "prox-gap", "invariance", "acceptance-curve"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TargetSection(_Section):
    kind: PsiKind = PsiKind.ZERO
    kappa: float = 1.0
    s: float = 0.0
    dim: int = Field(64, ge=1)
    product: bool = False
    weights: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "TargetSection":
        self.build()
        return self

    def build(self, dim: Optional[int] = None) -> TargetSpec:
        n = dim or self.dim
        cov = CovarianceSpec.identity(n) if self.product else CovarianceSpec(self.kappa, self.s, n)
        return TargetSpec(cov=cov, psi_kind=self.kind, weights=tuple(self.weights))


class SamplerSection(_Section):
    variant: Variant = Variant.MALA
    ell: float = Field(1.0, gt=0)
    gamma: float = Field(ONE_THIRD, gt=0)
    prox_lambda: Optional[float] = Field(None, gt=0)
    include_normalizer: bool = False

    def build(self, dim: int) -> ProposalConfig:
        return ProposalConfig(self.variant, ell=self.ell, dim=dim, gamma=self.gamma,
                              prox_lambda=self.prox_lambda,
                              include_normalizer=self.include_normalizer)


class RunSection(_Section):
    steps: int = Field(1000, ge=1)
    burn_in: int = Field(DEFAULT_BURN_IN, ge=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    replicates: int = Field(1, ge=1)
    jobs: int = Field(1, ge=1)
    out: str = "runs/default"
    max_records: int = Field(100_000, ge=1)


class SweepSection(_Section):
    variants: List[Variant] = Field(default_factory=lambda: [Variant.MALA], min_length=1)
    n_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_N_GRID), min_length=1)
    ell_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_ELL_GRID), min_length=1)
    gammas: List[float] = Field(default_factory=lambda: [ONE_THIRD], min_length=1)
    steps: Optional[int] = Field(None, ge=1)
    diag_samples: int = Field(DEFAULT_DIAG_SAMPLES, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "SweepSection":
        if any(n < 1 for n in self.n_grid):
            raise ValueError(f"n_grid entries must be >= 1, got {self.n_grid}")
        if any(not e > 0 for e in self.ell_grid):
            raise ValueError(f"ell_grid entries must be > 0, got {self.ell_grid}")
        if any(not g > 0 for g in self.gammas):
            raise ValueError(f"gammas must be > 0, got {self.gammas}")
        return self


class DiagnoseSection(_Section):
    name: DiagnosticName
    n_inner: int = Field(1000, ge=1)
    samples: int = Field(1000, ge=2)
    n_grid: List[int] = Field(default_factory=lambda: [64, 128, 256, 512, 1024])
    lams: List[float] = Field(default_factory=lambda: [0.5, 0.1, 0.01])
    idx_pairs: List[Tuple[int, int]] = Field(default_factory=lambda: [(1, 1), (1, 2), (2, 2)])
    sde_dt: float = Field(1e-3, gt=0)
    sde_steps: int = Field(200_000, ge=1)
    coords: List[int] = Field(default_factory=lambda: [1, 2])
    deltas: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    block: int = Field(100, ge=1)
    ells: List[float] = Field(default_factory=lambda: list(DEFAULT_ELL_GRID), min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "DiagnoseSection":
        if len(self.deltas) < 2 or any(not d > 0 for d in self.deltas):
            raise ValueError(f"deltas needs at least two entries, all > 0, got {self.deltas}")
        if any(not e > 0 for e in self.ells):
            raise ValueError(f"ells entries must be > 0, got {self.ells}")
        if any(c < 1 for c in self.coords):
            raise ValueError(f"coords are 1-based, got {self.coords}")
        return self


class RunConfig(_Section):
    target: TargetSection = Field(default_factory=TargetSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    run: RunSection = Field(default_factory=RunSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    diagnose: Optional[DiagnoseSection] = None

    @model_validator(mode="after")
    def _check_pairing(self) -> "RunConfig":
        if Variant.PROX_PEREYRA in (self.sampler.variant, *self.sweep.variants) and not self.target.product:
            raise ValueError("ProxMALA_Pereyra requires target.product = true")
        self.sampler.build(self.target.dim)
        return self

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of the validated model, minus run.out and run.jobs."""
        data = self.model_dump(mode="json", exclude={"run": {"out", "jobs"}})
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return sha256_text(canonical)

    def target_spec(self) -> TargetSpec:
        return self.target.build()

    def proposal(self) -> ProposalConfig:
        return self.sampler.build(self.target.dim)

    def sweep_plan(self) -> SweepPlan:
        return SweepPlan(
            target=self.target.build(),
            variants=tuple(self.sweep.variants),
            n_grid=tuple(self.sweep.n_grid),
            ell_grid=tuple(self.sweep.ell_grid),
            gammas=tuple(self.sweep.gammas),
            steps=self.sweep.steps or self.run.steps,
            replicates=self.run.replicates,
            master_seed=self.run.seed,
            burn_in=self.run.burn_in,
            diag_samples=self.sweep.diag_samples,
            jobs=self.run.jobs,
        )

    def with_overrides(self, seed: Optional[int] = None, jobs: Optional[int] = None) -> "RunConfig":
        """Command-line --seed / --jobs win over the file; re-validated."""
        data = self.model_dump()
        if seed is not None:
            data["run"]["seed"] = seed
        if jobs is not None:
            data["run"]["jobs"] = jobs
        return RunConfig.model_validate(data)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"invalid config file: {exc}") from exc
    return RunConfig.model_validate(data)


def load_config(path: str) -> RunConfig:
    """Read and validate a TOML run config. Raises ValueError or pydantic.ValidationError."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"invalid config file {path}: {exc}") from exc
    return RunConfig.model_validate(data)
