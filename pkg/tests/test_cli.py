"""End-to-end tests of the command-line front end."""

import pytest

from cli.app import EXIT_CONFIG, EXIT_OK, main
from cli.diagnose_cmd import DIAGNOSTIC_RUNNERS
from core.config import DIAGNOSTICS
from core.results_io import read_key_values, read_records, read_sweep_csv

CHAIN_TOML = """
[target]
kind = "zero"
dim = 16

[sampler]
variant = "MALA"
ell = 1.0

[run]
steps = 300
seed = 5
"""

SWEEP_TOML = """
[target]
kind = "zero"
product = true
dim = 8

[run]
steps = 100
replicates = 1
seed = 1

[sweep]
variants = ["MALA"]
n_grid = [8]
ell_grid = [0.5, 1.0, 1.5]
diag_samples = 0
"""

PROX_CHECK_TOML = """
[target]
kind = "quadratic_sobolev"
kappa = 1.0
s = 0.25
dim = 16

[diagnose]
name = "prox-check"
samples = 3
lams = [0.5, 0.1]
"""

QN_TOML = """
[target]
kind = "zero"
product = true
dim = 64

[diagnose]
name = "qn-moments"
samples = 200
"""

PROX_GAP_TOML = """
[target]
kind = "quadratic_sobolev"
s = 0.25
dim = 32

[sampler]
variant = "ProxMALA_Canonical"

[diagnose]
name = "prox-gap"
samples = 20
deltas = [0.2, 0.1, 0.05]
"""

INVARIANCE_TOML = """
[target]
kind = "zero"
dim = 16

[run]
steps = 600
seed = 4

[diagnose]
name = "invariance"
block = 20
coords = [1, 2]
"""

CURVE_TOML = """
[target]
kind = "zero"
dim = 8

[run]
steps = 10000
seed = 6

[diagnose]
name = "acceptance-curve"
ells = [0.5, 1.5, 3.0]
"""

SDE_TOML = """
[target]
kind = "quadratic_sobolev"
s = 0.0
dim = 16

[sampler]
variant = "ProxMALA_Canonical"

[run]
steps = 2000
seed = 2

[diagnose]
name = "sde-compare"
sde_dt = 0.01
sde_steps = 20000
coords = [1, 2]
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestChain:
    """`chain` subcommand."""

    def test_writes_outputs(self, tmp_path):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        out = tmp_path / "run"
        assert main(["chain", "--config", cfg, "--out", str(out)]) == EXIT_OK
        summary = read_key_values(str(out / "summary.txt"))
        assert summary["steps"] == "300"
        assert 0.0 <= float(summary["acceptance_rate"]) <= 1.0
        assert len(read_records(str(out / "records.csv"))) == 300
        manifest = read_key_values(str(out / "manifest.txt"))
        assert manifest["master_seed"] == "5"
        assert "file.records.csv" in manifest

    def test_same_seed_same_manifest(self, tmp_path):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        main(["chain", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["chain", "--config", cfg, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "manifest.txt").read_text() == (tmp_path / "b" / "manifest.txt").read_text()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        main(["chain", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["chain", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
        a = read_key_values(str(tmp_path / "a" / "manifest.txt"))
        b = read_key_values(str(tmp_path / "b" / "manifest.txt"))
        assert a["file.records.csv"] != b["file.records.csv"]

    def test_relative_out_uses_output_root(self, tmp_path, output_root):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        assert main(["chain", "--config", cfg, "--out", "rel"]) == EXIT_OK
        assert (output_root / "rel" / "manifest.txt").exists()


class TestSweep:
    """`sweep` subcommand."""

    def test_writes_table(self, tmp_path):
        cfg = _write(tmp_path, "sweep.toml", SWEEP_TOML)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert len(read_sweep_csv(str(out / "sweep.csv"))) == 3
        summary = read_key_values(str(out / "summary.txt"))
        assert summary["complete"] == "true"
        assert summary["MALA.gamma_star"].startswith("n/a")
        manifest = read_key_values(str(out / "manifest.txt"))
        assert manifest["file.timing.txt"] == "unhashed"

    def test_empty_ell_grid_is_config_error(self, tmp_path):
        cfg = _write(tmp_path, "sweep.toml", SWEEP_TOML.replace("[0.5, 1.0, 1.5]", "[]"))
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


class TestDiagnose:
    """`diagnose` subcommand."""

    def test_prox_check(self, tmp_path):
        cfg = _write(tmp_path, "prox.toml", PROX_CHECK_TOML)
        out = tmp_path / "diag"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        assert report["diagnostic"] == "prox-check"
        assert float(report["lambda_0.5.max_closed_form_gap"]) < 1e-12
        assert report["lambda_0.1.envelope_violations"] == "0"

    def test_qn_moments(self, tmp_path):
        cfg = _write(tmp_path, "qn.toml", QN_TOML)
        out = tmp_path / "qn"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        assert report["mode"] == "product_gaussian"
        assert float(report["limit_var"]) == pytest.approx(0.5)

    def test_qn_moments_reports_empirical_pereyra_moments(self, tmp_path):
        text = QN_TOML.replace("[diagnose]", '[sampler]\nvariant = "ProxMALA_Pereyra"\n\n[diagnose]')
        cfg = _write(tmp_path, "qn_pereyra.toml", text)
        out = tmp_path / "qnp"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        assert float(report["limit_var"]) == pytest.approx(4.5)
        assert {"var", "var_se", "exact_var", "ks_p"} <= set(report)

    def test_missing_section(self, tmp_path):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_CONFIG

    def test_prox_gap(self, tmp_path):
        cfg = _write(tmp_path, "gap.toml", PROX_GAP_TOML)
        out = tmp_path / "gap"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        assert report["gap_variant"] == "ProxMALA_Canonical"
        assert len(report["mean_gap"].split(",")) == 3
        assert float(report["slope"]) == pytest.approx(2.0, abs=0.3)

    def test_invariance(self, tmp_path):
        cfg = _write(tmp_path, "inv.toml", INVARIANCE_TOML)
        out = tmp_path / "inv"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        assert report["n_blocks"] == "30"
        assert 0.0 <= float(report["coord2.ks_p"]) <= 1.0

    def test_acceptance_curve(self, tmp_path):
        cfg = _write(tmp_path, "curve.toml", CURVE_TOML)
        out = tmp_path / "curve"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        alphas = [float(a) for a in report["alphas"].split(",")]
        assert alphas[0] > alphas[-1]
        assert float(report["limit_alpha_star"]) == pytest.approx(0.574, abs=1e-3)

    def test_sde_compare_puts_chain_on_diffusion_clock(self, tmp_path):
        cfg = _write(tmp_path, "sde.toml", SDE_TOML)
        out = tmp_path / "sde"
        assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
        report = read_key_values(str(out / "report.txt"))
        # 2000 steps of N^-1/3 = 1/(16^(1/3)) each
        assert float(report["chain_horizon"]) == pytest.approx(2000 * 16 ** (-1 / 3))
        assert int(report["shared_times"]) > 1
        assert float(report["coord1.interp_var"]) > 0.0
        assert "coord1.scheme_var" in report

    def test_every_named_diagnostic_has_a_runner(self):
        assert set(DIAGNOSTIC_RUNNERS) == set(DIAGNOSTICS)


class TestErrors:
    """Exit codes for bad input."""

    def test_missing_config(self, tmp_path):
        assert main(["chain", "--config", str(tmp_path / "none.toml")]) == EXIT_CONFIG

    def test_invalid_value(self, tmp_path):
        cfg = _write(tmp_path, "bad.toml", "[target]\nkappa = 0.4\n")
        assert main(["chain", "--config", cfg]) == EXIT_CONFIG

    def test_bad_seed_flag(self, tmp_path):
        cfg = _write(tmp_path, "chain.toml", CHAIN_TOML)
        with pytest.raises(SystemExit):
            main(["chain", "--config", cfg, "--seed", "-1"])
