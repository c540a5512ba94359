"""
core/sweep.py
Experiment grids over (variant, N, ell, gamma) with replicates: one stationary chain
per cell, per-row status, and the scaling fits built on the resulting table.

Every (cell, replicate) draws from its own stream keyed by identity, so rows do not
depend on execution order or on the number of workers.
"""
import logging
import math
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from core.diagnostics import qn_sample, refine_speed_optimum
from core.samplers import (
    DEFAULT_BURN_IN, ProposalConfig, Variant, run_chain, stationary_draws, warm_start,
)
from core.targets import TargetSpec
from core.utils import make_rng, stream_seed

ProgressCallback = Callable[[str, Optional[int]], None]
CancelCheck = Callable[[], bool]
RowCallback = Callable[["SweepRow"], None]

STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"
STATUS_INCOMPLETE = "incomplete"

DEFAULT_N_GRID = (64, 256, 1024, 4096)
DEFAULT_ELL_GRID = tuple(0.5 + 0.25 * k for k in range(11))
DEFAULT_STEPS = 100_000
DEFAULT_REPLICATES = 3
DEFAULT_DIAG_SAMPLES = 200
ONE_THIRD = 1.0 / 3.0


@dataclass(frozen=True)
class SweepCell:
    index: int
    variant: Variant
    n: int
    ell: float
    gamma: float

    @property
    def label(self) -> str:
        return f"{self.index}:{self.variant.value}:N={self.n}:ell={self.ell:g}:gamma={self.gamma:.6g}"


@dataclass(frozen=True)
class SweepPlan:
    target: TargetSpec
    variants: Tuple[Variant, ...]
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    ell_grid: Tuple[float, ...] = DEFAULT_ELL_GRID
    gammas: Tuple[float, ...] = (ONE_THIRD,)
    steps: int = DEFAULT_STEPS
    replicates: int = DEFAULT_REPLICATES
    master_seed: int = 0
    burn_in: int = DEFAULT_BURN_IN
    diag_samples: int = DEFAULT_DIAG_SAMPLES
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(Variant(v) for v in self.variants))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "ell_grid", tuple(float(e) for e in self.ell_grid))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        for name in ("variants", "n_grid", "ell_grid", "gammas"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if any(n < 1 for n in self.n_grid):
            raise ValueError(f"n_grid entries must be >= 1, got {self.n_grid}")
        if any(not e > 0 for e in self.ell_grid):
            raise ValueError(f"ell_grid entries must be > 0, got {self.ell_grid}")
        if any(not g > 0 for g in self.gammas):
            raise ValueError(f"gammas must be > 0, got {self.gammas}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if self.diag_samples < 0:
            raise ValueError(f"diag_samples must be >= 0, got {self.diag_samples}")
        if Variant.PROX_PEREYRA in self.variants and not self.target.cov.product:
            raise ValueError("ProxMALA_Pereyra requires a product (identity) covariance target")

    def cells(self) -> List[SweepCell]:
        """Canonical enumeration; the position in this list is the cell identity."""
        out = []
        for v in self.variants:
            for n in self.n_grid:
                for ell in self.ell_grid:
                    for g in self.gammas:
                        out.append(SweepCell(len(out), v, n, ell, g))
        return out

    @property
    def n_rows(self) -> int:
        return len(self.variants) * len(self.n_grid) * len(self.ell_grid) * len(self.gammas) * self.replicates


@dataclass
class SweepRow:
    cell_index: int
    replicate: int
    variant: str
    n: int
    ell: float
    gamma: float
    seed: int
    acceptance: float = math.nan
    acceptance_se: float = math.nan
    mean_sq_jump: float = math.nan
    mean_abs_i: float = math.nan
    mean_abs_e: float = math.nan
    status: str = STATUS_INCOMPLETE
    error: str = ""
    runtime: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_COMPLETED

    @property
    def key(self) -> Tuple[int, int]:
        return self.cell_index, self.replicate


@dataclass
class SweepResult:
    plan: SweepPlan
    rows: List[SweepRow] = field(default_factory=list)
    interrupted: bool = False

    @property
    def complete(self) -> bool:
        return not self.interrupted and all(r.status != STATUS_INCOMPLETE for r in self.rows)

    @property
    def incomplete_cells(self) -> List[int]:
        return sorted({r.cell_index for r in self.rows if r.status == STATUS_INCOMPLETE})

    @property
    def failed_rows(self) -> List[SweepRow]:
        return [r for r in self.rows if r.status == STATUS_FAILED]

    def select(self, variant: Variant, gamma: Optional[float] = None,
               n: Optional[int] = None) -> List[SweepRow]:
        variant = Variant(variant)
        return [
            r for r in self.rows
            if r.ok and r.variant == variant.value
            and (gamma is None or math.isclose(r.gamma, gamma, rel_tol=1e-9))
            and (n is None or r.n == n)
        ]


def _row_seed(plan: SweepPlan, cell: SweepCell, replicate: int) -> int:
    ss = stream_seed(plan.master_seed, cell.index, replicate, "chain")
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_cell(plan: SweepPlan, cell: SweepCell, replicate: int,
             cancel_check: Optional[CancelCheck] = None) -> SweepRow:
    """One (cell, replicate): stationary start, run_chain, then the i/e decomposition folds."""
    row = SweepRow(cell.index, replicate, cell.variant.value, cell.n, cell.ell, cell.gamma,
                   seed=_row_seed(plan, cell, replicate))
    started = time.perf_counter()
    try:
        t = plan.target.with_dim(cell.n)
        cfg = ProposalConfig(cell.variant, ell=cell.ell, dim=cell.n, gamma=cell.gamma)
        rng = make_rng(plan.master_seed, cell.index, replicate, "chain")
        x0 = warm_start(t, rng, plan.burn_in, cancel_check=cancel_check)
        summary = run_chain(t, cfg, plan.steps, x0, rng, cancel_check=cancel_check)
        row.acceptance = summary.acceptance_rate
        row.acceptance_se = summary.acceptance_se
        row.mean_sq_jump = summary.mean_sq_jump

        if plan.diag_samples and math.isclose(cell.gamma, ONE_THIRD, rel_tol=1e-12):
            drng = make_rng(plan.master_seed, cell.index, replicate, "diagnostics")
            xs = stationary_draws(t, drng, plan.diag_samples, burn_in=plan.burn_in)
            decs = [qn_sample(t, cfg, x, drng, 1)[0] for x in xs]
            row.mean_abs_i = float(np.mean([abs(d.i) for d in decs]))
            row.mean_abs_e = float(np.mean([abs(d.e) for d in decs]))
        row.status = STATUS_COMPLETED
    except InterruptedError:
        row.status = STATUS_INCOMPLETE
        row.error = "cancelled"
    except Exception as exc:
        logging.warning(f"sweep: cell {cell.label} replicate {replicate} failed: {exc}")
        row.status = STATUS_FAILED
        row.error = f"{type(exc).__name__}: {exc}"
    row.runtime = time.perf_counter() - started
    return row


def _pending_row(plan: SweepPlan, cell: SweepCell, replicate: int) -> SweepRow:
    return SweepRow(cell.index, replicate, cell.variant.value, cell.n, cell.ell, cell.gamma,
                    seed=_row_seed(plan, cell, replicate), error="not run")


def _collect_finished(futures, finish: Callable[[SweepRow], None]) -> None:
    """Keep rows that completed after the last wait but before an interrupt."""
    for fut in futures:
        if fut.done() and not fut.cancelled() and fut.exception() is None:
            finish(fut.result())


def run_sweep(plan: SweepPlan, progress_cb: Optional[ProgressCallback] = None,
              cancel_check: Optional[CancelCheck] = None,
              on_row: Optional[RowCallback] = None,
              cells: Optional[Sequence[SweepCell]] = None) -> SweepResult:
    """Execute every (cell, replicate) of the plan; rows come back sorted by identity.

    A failing cell is recorded and the sweep goes on. Cancellation or Ctrl-C leaves the
    unfinished rows with status 'incomplete' and sets result.interrupted.
    """
    cells = list(cells) if cells is not None else plan.cells()
    work = [(c, r) for c in cells for r in range(plan.replicates)]
    done: Dict[Tuple[int, int], SweepRow] = {}
    interrupted = False
    total = len(work)

    def finish(row: SweepRow) -> None:
        done[row.key] = row
        if on_row:
            on_row(row)
        if progress_cb:
            progress_cb(f"cell {row.cell_index} rep {row.replicate}: {row.status}",
                        int(100 * len(done) / total))

    logging.info(f"sweep: {total} rows over {len(cells)} cells with {plan.jobs} worker(s)")
    try:
        if plan.jobs == 1:
            for cell, rep in work:
                if cancel_check and cancel_check():
                    interrupted = True
                    break
                row = run_cell(plan, cell, rep, cancel_check)
                finish(row)
                if row.status == STATUS_INCOMPLETE:
                    interrupted = True
                    break
        else:
            pool = ProcessPoolExecutor(max_workers=plan.jobs)
            pending = {pool.submit(run_cell, plan, c, r) for c, r in work}
            try:
                while pending:
                    finished, pending = wait(pending, timeout=1.0, return_when=FIRST_COMPLETED)
                    for fut in finished:
                        finish(fut.result())
                    if cancel_check and cancel_check():
                        interrupted = True
                        break
            except KeyboardInterrupt:
                logging.warning("sweep: interrupted, unfinished rows are flagged incomplete")
                interrupted = True
            finally:
                if interrupted:
                    _collect_finished(pending, finish)
                # once interrupted, queued cells are dropped and running ones are not awaited
                pool.shutdown(wait=not interrupted, cancel_futures=True)
    except KeyboardInterrupt:
        logging.warning("sweep: interrupted, unfinished rows are flagged incomplete")
        interrupted = True

    rows = []
    for cell, rep in work:
        rows.append(done.get((cell.index, rep)) or _pending_row(plan, cell, rep))
    rows.sort(key=lambda r: r.key)
    result = SweepResult(plan=plan, rows=rows, interrupted=interrupted)
    failed = len(result.failed_rows)
    logging.info(f"sweep: finished, {len(done)}/{total} rows run, {failed} failed, "
                 f"complete={result.complete}")
    return result


# ---------------------------------------------------------------------------
# Fits over the table
# ---------------------------------------------------------------------------

def acceptance_by_n(result: SweepResult, variant: Variant, gamma: float) -> Dict[int, float]:
    """Mean acceptance per N (over ells and replicates) at one gamma."""
    rows = result.select(variant, gamma=gamma)
    out: Dict[int, List[float]] = {}
    for r in rows:
        out.setdefault(r.n, []).append(r.acceptance)
    return {n: float(np.mean(v)) for n, v in sorted(out.items())}


def gamma_slopes(result: SweepResult, variant: Variant) -> Dict[float, float]:
    """Slope of acceptance against log N for each gamma in the plan."""
    slopes = {}
    for g in result.plan.gammas:
        acc = acceptance_by_n(result, variant, g)
        if len(acc) < 2:
            continue
        fit = stats.linregress(np.log(list(acc.keys())), list(acc.values()))
        slopes[g] = float(fit.slope)
    return slopes


def fit_gamma_star(result: SweepResult, variant: Variant) -> float:
    """The gamma whose acceptance is most stable in N (slope against log N nearest 0)."""
    slopes = gamma_slopes(result, variant)
    if len(slopes) < 2:
        raise ValueError(
            f"degenerate sweep for {Variant(variant).value}: need >= 2 gammas with >= 2 dimensions each"
        )
    return min(slopes, key=lambda g: abs(slopes[g]))


def optimal_acceptance(result: SweepResult, variant: Variant) -> Tuple[float, float]:
    """(ell*, alpha*) maximising ell * acceptance at gamma = 1/3 and the largest N."""
    gamma = next((g for g in result.plan.gammas if math.isclose(g, ONE_THIRD, rel_tol=1e-9)), None)
    if gamma is None:
        raise ValueError("optimal acceptance needs an ell sweep at gamma = 1/3")
    rows = result.select(variant, gamma=gamma)
    if not rows:
        raise ValueError(f"no completed rows for {Variant(variant).value} at gamma = 1/3")
    n_max = max(r.n for r in rows)
    by_ell: Dict[float, List[float]] = {}
    for r in rows:
        if r.n == n_max:
            by_ell.setdefault(r.ell, []).append(r.acceptance)
    if len(by_ell) < 3:
        raise ValueError(f"need at least 3 ell values at N={n_max}, got {len(by_ell)}")
    ells = sorted(by_ell)
    alphas = [float(np.mean(by_ell[e])) for e in ells]
    ell_star, alpha_star, boundary = refine_speed_optimum(ells, alphas)
    if boundary:
        raise ValueError(f"speed maximum at the grid boundary ell={ell_star}; widen ell_grid")
    return ell_star, alpha_star
