"""
cli/sweep_cmd.py
`sweep` subcommand: run the grid, write the table, the fitted gamma*, ell*, alpha*
per variant, and a manifest that flags incomplete cells.
"""
import logging
import os
from typing import Any, Dict

from cli.chain_cmd import log_progress
from core import __version__
from core.config import RunConfig
from core.diagnostics import optimal_limit_acceptance
from core.results_io import (
    SUMMARY_FILE, SWEEP_FILE, TIMING_FILE, write_key_values, write_manifest, write_sweep_csv,
)
from core.sweep import SweepResult, fit_gamma_star, gamma_slopes, optimal_acceptance, run_sweep


def summarize(result: SweepResult) -> Dict[str, Any]:
    plan = result.plan
    pairs: Dict[str, Any] = {
        "target": plan.target.describe(),
        "cells": len(plan.cells()),
        "rows": len(result.rows),
        "failed_rows": len(result.failed_rows),
        "complete": result.complete,
    }
    for v in plan.variants:
        key = v.value
        slopes = gamma_slopes(result, v)
        if slopes:
            pairs[f"{key}.gamma_slopes"] = [f"{g:.6g}:{s:.6g}" for g, s in sorted(slopes.items())]
        try:
            pairs[f"{key}.gamma_star"] = fit_gamma_star(result, v)
        except ValueError as exc:
            pairs[f"{key}.gamma_star"] = f"n/a ({exc})"
        try:
            ell_star, alpha_star = optimal_acceptance(result, v)
            pairs[f"{key}.ell_star"] = ell_star
            pairs[f"{key}.alpha_star"] = alpha_star
        except ValueError as exc:
            pairs[f"{key}.ell_star"] = f"n/a ({exc})"
        pairs[f"{key}.limit_alpha_star"] = optimal_limit_acceptance(v)[1]
    return pairs


def cmd_sweep(cfg: RunConfig, out_dir: str) -> int:
    plan = cfg.sweep_plan()
    result = run_sweep(plan, progress_cb=log_progress)

    write_sweep_csv(os.path.join(out_dir, SWEEP_FILE), result.rows)
    write_key_values(os.path.join(out_dir, SUMMARY_FILE), summarize(result))
    write_key_values(os.path.join(out_dir, TIMING_FILE), {
        f"{r.cell_index}.{r.replicate}": r.runtime for r in result.rows
    })
    write_manifest(out_dir, cfg.config_hash(), __version__, plan.master_seed,
                   complete=result.complete, incomplete_cells=result.incomplete_cells)

    if result.failed_rows:
        logging.warning(f"sweep: {len(result.failed_rows)} row(s) failed; see the error column")
    if result.interrupted:
        logging.error(f"sweep interrupted; incomplete cells: {result.incomplete_cells}")
        return 2
    return 0
