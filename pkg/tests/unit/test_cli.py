"""Tests for the fluctlab command line."""

from __future__ import annotations

import io
import json
import math

import pytest
import yaml

from fluctlab.__about__ import __version__
from fluctlab._fielddump import field_from_json
from fluctlab._manifest import parse_manifest
from fluctlab._results import parse_csv, parse_weak_error_csv
from fluctlab.cli import COMMANDS, build_parser, main
from fluctlab.commands import Console
from fluctlab.commands.selftest import CHECKS
from tests.conftest import small_sections


@pytest.fixture(autouse=True)
def no_thread_env(monkeypatch):
    monkeypatch.delenv("FLUCTLAB_THREADS", raising=False)


@pytest.fixture
def console() -> Console:
    return Console(io.StringIO(), io.StringIO())


@pytest.fixture
def small_config(write_config):
    return write_config(yaml.safe_dump(small_sections()))


def run_cli(console, *argv) -> int:
    return main([str(a) for a in argv], console=console)


# =============================================================================
# Parser
# =============================================================================


class TestParser:
    def test_subcommands(self):
        assert set(COMMANDS) == {
            "solve-fp", "simulate-particles", "simulate-spde", "weak-error",
            "clt-baseline", "modulated-energy", "refine", "selftest",
        }

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_seed_must_be_unsigned(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["selftest", "--seed", "-1"])

    def test_threads_positive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["selftest", "--threads", "0"])

    def test_refine_study_choices(self):
        args = build_parser().parse_args(["refine", "--study", "moments"])
        assert args.study == "moments"
        with pytest.raises(SystemExit):
            build_parser().parse_args(["refine", "--study", "nope"])


# =============================================================================
# Exit codes
# =============================================================================


class TestExitCodes:
    def test_selftest_passes(self, console, tmp_path):
        assert run_cli(console, "selftest", "--out", tmp_path) == 0
        out = console.stdout.getvalue()
        assert "All 9 check(s) passed." in out
        assert out.count("PASS  ") == 9
        assert not any(tmp_path.iterdir())

    def test_selftest_covers_every_module(self):
        modules = {name.split(".")[0] for name, _ in CHECKS}
        assert {"spectral", "kernels", "particles", "meanfield", "spde", "functionals", "experiments"} <= modules

    def test_bad_lambda(self, console, tmp_path):
        code = run_cli(console, "solve-fp", "--out", tmp_path, "--set", "spectral.lambda=1.4")
        assert code == 2
        err = console.stderr.getvalue()
        assert err.startswith("FAIL  config:")
        assert "  ERROR: " in err
        assert "lambda > 1.5*d" in err

    def test_malformed_override(self, console):
        assert run_cli(console, "solve-fp", "--set", "kmax=4") == 2
        assert "section.key=value" in console.stderr.getvalue()

    def test_missing_config_file(self, console, tmp_path):
        assert run_cli(console, "solve-fp", "--config", tmp_path / "missing.yaml") == 2

    def test_weak_error_needs_three_n(self, console, tmp_path, small_config):
        code = run_cli(console, "weak-error", "--config", small_config, "--out", tmp_path, "--set", "experiment.N=[16, 32]")
        assert code == 2
        assert "at least 3" in console.stderr.getvalue()

    def test_clt_needs_zero_drift(self, console, tmp_path, small_config):
        code = run_cli(console, "clt-baseline", "--config", small_config, "--out", tmp_path, "--set", "drift.preset=sine1d")
        assert code == 2
        assert console.stderr.getvalue().startswith("ERROR: clt baseline")


# =============================================================================
# Artifacts
# =============================================================================


class TestArtifacts:
    def test_solve_fp(self, console, tmp_path, small_config):
        assert run_cli(console, "solve-fp", "--config", small_config, "--out", tmp_path) == 0
        root = tmp_path / "solve-fp"
        manifest = parse_manifest((root / "manifest.json").read_text())
        assert manifest["subcommand"] == "solve-fp"
        assert "curve/index.json" in manifest["outputs"]
        assert (root / "curve" / "t00004.json").exists()
        summary = json.loads((root / "summary.json").read_text())
        assert summary["steps"] == 4
        assert "Wrote" in console.stdout.getvalue()

    def test_solve_fp_heat_decay(self, console, tmp_path, small_config):
        code = run_cli(
            console, "solve-fp", "--config", small_config, "--out", tmp_path,
            "--set", "initial.density=cosine", "--set", "initial.amplitude=0.5",
        )
        assert code == 0
        final = field_from_json((tmp_path / "solve-fp" / "curve" / "t00004.json").read_text())
        expected = 0.25 * math.exp(-2.0 * math.pi**2 * 0.02)
        assert final.coeff((1,)).real == pytest.approx(expected, rel=1e-12)

    def test_seed_override_recorded(self, console, tmp_path, small_config):
        run_cli(console, "simulate-spde", "--config", small_config, "--out", tmp_path, "--seed", 99, "--replica", 2)
        manifest = parse_manifest((tmp_path / "simulate-spde" / "manifest.json").read_text())
        assert manifest["master_seed"] == 99
        assert manifest["extra"]["replica"] == 2
        norms = parse_csv((tmp_path / "simulate-spde" / "norms.csv").read_text())
        assert len(norms) == 5

    def test_simulate_particles(self, console, tmp_path, small_config):
        code = run_cli(
            console, "simulate-particles", "--config", small_config, "--out", tmp_path,
            "--set", "experiment.record_every=2",
        )
        assert code == 0
        rows = parse_csv((tmp_path / "simulate-particles" / "trajectory.csv").read_text())
        assert {r["particle"] for r in rows} == set(range(16))

    def test_weak_error(self, console, tmp_path, small_config):
        assert run_cli(console, "weak-error", "--config", small_config, "--out", tmp_path, "--threads", 2) == 0
        root = tmp_path / "weak-error"
        rows = parse_weak_error_csv((root / "weak_error.csv").read_text())
        assert [r.N for r in rows] == [16, 32, 64]
        fit = json.loads((root / "fit.json").read_text())
        assert "slope" in fit and "flagged_N" in fit
        manifest = parse_manifest((root / "manifest.json").read_text())
        assert manifest["threads"] == 2
        assert manifest["extra"]["spde_pool"]["shared_across_rows"] is True

    def test_weak_error_bytes_independent_of_threads(self, tmp_path, small_config):
        for threads in (1, 3):
            run_cli(Console(io.StringIO(), io.StringIO()), "weak-error", "--config", small_config,
                    "--out", tmp_path / str(threads), "--threads", threads)
        one = (tmp_path / "1" / "weak-error" / "weak_error.csv").read_bytes()
        three = (tmp_path / "3" / "weak-error" / "weak_error.csv").read_bytes()
        assert one == three

    def test_refine_coercivity(self, console, tmp_path, small_config):
        assert run_cli(console, "refine", "--config", small_config, "--out", tmp_path, "--study", "coercivity") == 0
        rows = parse_csv((tmp_path / "refine" / "coercivity.csv").read_text())
        assert [r["n"] for r in rows] == [2, 4]
