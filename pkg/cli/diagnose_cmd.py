"""
cli/diagnose_cmd.py
`diagnose` subcommand: one named diagnostic, written to report.txt.
"""
import logging
import math
import os
from typing import Any, Callable, Dict

import numpy as np

from cli.chain_cmd import log_progress
from core import __version__
from core.config import RunConfig
from core.diagnostics import (
    acceptance_curve, drift_estimate, drift_gap_sq, error_rate_regression, invariance_principle_probe,
    limit_log_ratio_variance, noise_covariance, optimal_limit_acceptance,
    product_gaussian_exact_moments, product_gaussian_ln_moments, prox_mala_gap, qn_sample,
    speed_hilbert,
)
from core.prox import attainable_tol, moreau_envelope, prox
from core.results_io import REPORT_FILE, write_key_values, write_manifest
from core.samplers import Recorder, Variant, run_chain, stationary_draws, warm_start
from core.sde import chain_interpolant, em_stationary_variance, integrate, marginal_compare
from core.spectral import sobolev_norm
from core.targets import PsiKind, TargetSpec, mu_n, psi
from core.utils import make_rng

Report = Dict[str, Any]

PROX_CHECK_MAX_SAMPLES = 200


def _qn_moments(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    sigma2 = float(limit_log_ratio_variance(pc.ell, pc.variant))
    report: Report = {"limit_mean": -0.5 * sigma2, "limit_var": sigma2}
    if (t.cov.product and t.psi_kind is PsiKind.ZERO
            and pc.variant in (Variant.MALA, Variant.PROX_PEREYRA)):
        m = product_gaussian_ln_moments(pc.variant, t.dim, pc.ell, d.samples, rng, gamma=pc.gamma)
        exact_mean, exact_var = product_gaussian_exact_moments(pc.variant, t.dim, pc.ell, pc.gamma)
        report.update({
            "mode": "product_gaussian",
            "mean": m.mean, "mean_se": m.mean_se, "var": m.var, "var_se": m.var_se,
            "ks_p": m.ks_p, "exact_mean": exact_mean, "exact_var": exact_var,
        })
        return report
    xs = stationary_draws(t, rng, d.samples, burn_in=cfg.run.burn_in)
    decs = [qn_sample(t, pc, x, rng, 1)[0] for x in xs]
    q = np.array([dec.q for dec in decs])
    z = np.array([dec.z for dec in decs])
    report.update({
        "mode": "hilbert",
        "mean": float(q.mean()), "mean_se": float(q.std(ddof=1) / math.sqrt(q.size)),
        "var": float(q.var(ddof=1)),
        "z_mean": float(z.mean()), "z_var": float(z.var(ddof=1)),
        "mean_abs_i": float(np.mean([abs(dec.i) for dec in decs])),
        "mean_abs_e": float(np.mean([abs(dec.e) for dec in decs])),
    })
    return report


def _error_rates(cfg: RunConfig, rng: np.random.Generator) -> Report:
    d = cfg.diagnose
    fit = error_rate_regression(cfg.target_spec(), cfg.proposal(), d.n_grid, d.samples, rng,
                                burn_in=cfg.run.burn_in, progress_cb=log_progress)
    return {
        "n_grid": fit.n_grid,
        "mean_abs_i": fit.mean_abs_i,
        "mean_abs_e": fit.mean_abs_e,
        "slope_i": fit.slope_i, "slope_i_se": fit.slope_i_se, "slope_i_ci95": fit.interval("i"),
        "slope_e": fit.slope_e, "slope_e_se": fit.slope_e_se, "slope_e_ci95": fit.interval("e"),
    }


def _drift(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    x = stationary_draws(t, rng, 1, burn_in=cfg.run.burn_in)[0]
    drift = drift_estimate(t, pc, x, d.n_inner, rng)
    mu = mu_n(t, x)
    rejected = drift_estimate(t, pc, x, d.n_inner, rng, force_reject=True)
    return {
        "drift_head": drift[:8],
        "mu_head": mu[:8],
        "gap_norm_s": sobolev_norm(drift - mu, t.cov.s),
        "mu_norm_s": sobolev_norm(mu, t.cov.s),
        "force_reject_norm_s": sobolev_norm(rejected, t.cov.s),
        "gap_sq_debiased": drift_gap_sq(t, pc, x, d.n_inner, rng),
    }


def _noise_cov(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    x = stationary_draws(t, rng, 1, burn_in=cfg.run.burn_in)[0]
    nc = noise_covariance(t, pc, x, d.n_inner, rng, d.idx_pairs)
    report: Report = {}
    for (i, j), value in nc.entries.items():
        report[f"D[{i},{j}]"] = value
        report[f"D[{i},{j}].se"] = nc.std_errors[(i, j)]
        report[f"D[{i},{j}].limit"] = nc.limits[(i, j)]
    return report


def _sde_compare(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    h = float(speed_hilbert(pc.ell, pc.variant))
    x0 = warm_start(t, rng, cfg.run.burn_in)
    recorder = Recorder.for_steps(cfg.run.steps, cfg.run.max_records)
    summary = run_chain(t, pc, cfg.run.steps, x0, rng, recorder=recorder, progress_cb=log_progress)
    path = integrate(t, h, x0, d.sde_dt, d.sde_steps, rng)
    cmp = marginal_compare(summary, path, d.coords)
    # chain on the diffusion clock: one step lasts N^-gamma
    interp = chain_interpolant(recorder.records, pc.dt, recorder.stride, init=x0)
    shared = path.times[path.times <= interp.horizon]
    on_clock = interp(shared) if shared.size > 1 else None
    report: Report = {"h_ell": h, "sde_dt": d.sde_dt, "chain_steps": cfg.run.steps,
                      "chain_horizon": interp.horizon, "sde_horizon": float(path.times[-1]),
                      "shared_times": int(shared.size)}
    em_var = em_stationary_variance(t, h, d.sde_dt) if t.is_conjugate else None
    for row in cmp.rows:
        k = f"coord{row.coord}"
        report[f"{k}.chain_mean"] = row.chain_mean
        report[f"{k}.chain_var"] = row.chain_var
        report[f"{k}.sde_mean"] = row.sde_mean
        report[f"{k}.sde_var"] = row.sde_var
        report[f"{k}.rel_var_gap"] = row.rel_var_gap
        if on_clock is not None:
            j = row.coord - 1
            report[f"{k}.interp_var"] = float(on_clock[:, j].var(ddof=1))
            report[f"{k}.sde_path_var"] = float(path.states[:shared.size, j].var(ddof=1))
        if em_var is not None:
            report[f"{k}.scheme_var"] = float(em_var[row.coord - 1])
    report["max_rel_var_gap"] = cmp.max_rel_var_gap
    return report


def _prox_check(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, d = cfg.target_spec(), cfg.diagnose
    n = min(d.samples, PROX_CHECK_MAX_SAMPLES)
    xs = stationary_draws(t, rng, n, burn_in=cfg.run.burn_in)
    report: Report = {"samples": n}
    for lam in d.lams:
        worst_res, worst_closed, worst_disp, iters, envelope_violations = 0.0, 0.0, 0.0, 0, 0
        for x in xs:
            sol = prox(t, x, lam, tol=attainable_tol(t, x, lam))
            worst_res = max(worst_res, sol.residual)
            iters = max(iters, sol.iterations)
            xs_norm = sobolev_norm(x, t.cov.s)
            worst_disp = max(worst_disp, sobolev_norm(sol.point - x, t.cov.s) / (lam * (1.0 + xs_norm)))
            if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
                worst_closed = max(worst_closed, float(np.max(np.abs(sol.point - x / (1.0 + lam)))))
            if moreau_envelope(t, x, lam) > psi(t, x) + 1e-12 * (1.0 + abs(psi(t, x))):
                envelope_violations += 1
        key = f"lambda_{lam:g}"
        report[f"{key}.max_residual"] = worst_res
        report[f"{key}.max_iterations"] = iters
        report[f"{key}.displacement_constant"] = worst_disp
        report[f"{key}.envelope_violations"] = envelope_violations
        if t.psi_kind is PsiKind.QUADRATIC_SOBOLEV:
            report[f"{key}.max_closed_form_gap"] = worst_closed
    return report


def _prox_gap(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, d = cfg.target_spec(), cfg.diagnose
    variant = cfg.sampler.variant
    if variant not in (Variant.PROX_CANONICAL, Variant.PROX_PEREYRA):
        variant = Variant.PROX_CANONICAL
    fit = prox_mala_gap(t, d.deltas, d.samples, rng, variant=variant, burn_in=cfg.run.burn_in)
    return {
        "gap_variant": variant.value,
        "deltas": fit.deltas,
        "mean_gap": fit.mean_gap,
        "slope": fit.slope, "slope_se": fit.slope_se,
    }


def _invariance(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    rows = invariance_principle_probe(t, pc, cfg.run.steps, d.block, rng, coords=d.coords,
                                      burn_in=cfg.run.burn_in)
    report: Report = {"block": d.block, "n_blocks": rows[0].n_blocks}
    for row in rows:
        k = f"coord{row.coord}"
        report[f"{k}.ks_p"] = row.ks_p
        report[f"{k}.lag1_autocorr"] = row.lag1_autocorr
        report[f"{k}.mean"] = row.mean
        report[f"{k}.mean_se"] = row.mean_se
        report[f"{k}.variance_ratio"] = row.variance_ratio
    return report


def _acceptance_curve(cfg: RunConfig, rng: np.random.Generator) -> Report:
    t, pc, d = cfg.target_spec(), cfg.proposal(), cfg.diagnose
    curve = acceptance_curve(t, t.dim, d.ells, pc.gamma, cfg.run.steps, rng, variant=pc.variant,
                             burn_in=cfg.run.burn_in, progress_cb=log_progress)
    limit_ell, limit_alpha = optimal_limit_acceptance(pc.variant)
    return {
        "ells": curve.ells,
        "alphas": curve.alphas,
        "alpha_se": curve.alpha_se,
        "speeds": curve.speeds,
        "ell_star": curve.ell_star,
        "alpha_at_star": curve.alpha_at_star,
        "ell_star_grid": curve.ell_star_grid,
        "on_boundary": curve.on_boundary,
        "limit_ell_star": limit_ell,
        "limit_alpha_star": limit_alpha,
    }


DIAGNOSTIC_RUNNERS: Dict[str, Callable[[RunConfig, np.random.Generator], Report]] = {
    "qn-moments": _qn_moments,
    "error-rates": _error_rates,
    "drift": _drift,
    "noise-cov": _noise_cov,
    "sde-compare": _sde_compare,
    "prox-check": _prox_check,
    "prox-gap": _prox_gap,
    "invariance": _invariance,
    "acceptance-curve": _acceptance_curve,
}


def cmd_diagnose(cfg: RunConfig, out_dir: str) -> int:
    name = cfg.diagnose.name
    runner = DIAGNOSTIC_RUNNERS.get(name)
    if runner is None:
        raise ValueError(f"unknown diagnostic '{name}'")
    rng = make_rng(cfg.run.seed, 0, 0, f"diagnose:{name}")
    t: TargetSpec = cfg.target_spec()
    logging.info(f"diagnose: {name} on {t.describe()}")
    report: Report = {"diagnostic": name, "target": t.describe(),
                      "variant": cfg.sampler.variant.value, "ell": cfg.sampler.ell}
    report.update(runner(cfg, rng))
    write_key_values(os.path.join(out_dir, REPORT_FILE), report)
    write_manifest(out_dir, cfg.config_hash(), __version__, cfg.run.seed)
    return 0
