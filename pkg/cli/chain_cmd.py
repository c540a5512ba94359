"""
cli/chain_cmd.py
`chain` subcommand: one chain from a stationary start, persisted as records,
summary and manifest.
"""
import logging
import os
from typing import Optional

from core import __version__
from core.config import RunConfig
from core.diagnostics import limit_acceptance
from core.results_io import RECORDS_FILE, SUMMARY_FILE, write_key_values, write_manifest, write_records
from core.samplers import Recorder, run_chain, warm_start
from core.utils import make_rng


def log_progress(message: str, percent: Optional[int] = None) -> None:
    if percent is None:
        logging.info(message)
    else:
        logging.info(f"[{percent:3d}%] {message}")


def cmd_chain(cfg: RunConfig, out_dir: str) -> int:
    t = cfg.target_spec()
    pc = cfg.proposal()
    rng = make_rng(cfg.run.seed, 0, 0, "chain")

    x0 = warm_start(t, rng, cfg.run.burn_in, progress_cb=log_progress)
    recorder = Recorder.for_steps(cfg.run.steps, cfg.run.max_records)
    summary = run_chain(t, pc, cfg.run.steps, x0, rng, recorder, progress_cb=log_progress)

    write_records(os.path.join(out_dir, RECORDS_FILE), recorder.records)
    write_key_values(os.path.join(out_dir, SUMMARY_FILE), {
        "target": t.describe(),
        "variant": pc.variant.value,
        "dim": pc.dim,
        "ell": pc.ell,
        "gamma": pc.gamma,
        "delta": pc.delta,
        "dt": pc.dt,
        "steps": summary.n_steps,
        "burn_in": 0 if t.is_conjugate else cfg.run.burn_in,
        "record_stride": recorder.stride,
        "accept_count": summary.accept_count,
        "acceptance_rate": summary.acceptance_rate,
        "acceptance_se": summary.acceptance_se,
        "limit_acceptance": limit_acceptance(pc.ell, pc.variant),
        "mean_sq_jump": summary.mean_sq_jump,
        "coord_mean": summary.coord_mean,
        "coord_var": summary.coord_var,
    })
    write_manifest(out_dir, cfg.config_hash(), __version__, cfg.run.seed)
    logging.info(f"chain: acceptance {summary.acceptance_rate:.4f} written to {out_dir}")
    return 0
