"""
Tests for the experiment runner and the command-line interface
"""

import json
import sys

import numpy as np
import pytest
from pydantic import ValidationError

import cli
from jbdlab.config import settings
from jbdlab.core import ConvergenceHistory, PairOrder
from jbdlab.experiment import (
    DIAGNOSTICS_HEADER,
    EXIT_CONFIGURATION,
    EXIT_NUMERICAL,
    EXIT_SUCCESS,
    HISTORY_HEADER,
    ExperimentConfig,
    emit_plot_data,
    exit_code_for,
    load_pair,
    run_experiment,
)
from jbdlab.errors import DomainError, NotConvergedError, ParseError
from jbdlab.inner import ProjectionMode
from jbdlab.sparse import SparseMatrix, write_matrix_market
from jbdlab.utils import ArtifactWriter

PLOT_FILES = [
    "fig1_Fk.csv",
    "fig2_Ek.csv",
    "fig3_Fhat_Ghat.csv",
    "fig4_etaUhat.csv",
    "fig5_ritz_lower.csv",
    "fig6_ritz_upper.csv",
    "fig9_residual.csv",
]


def read_header(path):
    with open(path, encoding="utf-8") as handle:
        return handle.readline().strip().split(",")


@pytest.fixture
def matrix_files(tmp_path):
    """A random 30x10 A and 12x10 L written as Matrix Market files."""
    rng = np.random.default_rng(7)
    a_path = write_matrix_market(SparseMatrix.from_dense(rng.standard_normal((30, 10))), tmp_path / "a.mtx")
    l_path = write_matrix_market(SparseMatrix.from_dense(rng.standard_normal((12, 10))), tmp_path / "l.mtx")
    return a_path, l_path


class TestExperimentConfig:
    """Test validation of the experiment configuration"""

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.pair == "Ac_Ls"
        assert not cfg.file_mode
        assert cfg.swap is PairOrder.KEEP
        assert cfg.label() == "Ac_Ls-full"

    def test_pair_and_file_conflict(self, tmp_path):
        with pytest.raises(ValidationError, match="either --pair or --matrix-a"):
            ExperimentConfig(pair="Ac_Ls", matrix_a=tmp_path / "a.mtx", matrix_l="@first-derivative")

    def test_unknown_pair(self):
        with pytest.raises(ValidationError, match="unknown builtin pair"):
            ExperimentConfig(pair="nope")

    def test_matrix_l_alone(self):
        with pytest.raises(ValidationError, match="needs --matrix-a"):
            ExperimentConfig(matrix_l="@first-derivative")

    def test_matrix_a_alone(self, tmp_path):
        with pytest.raises(ValidationError, match="needs --matrix-l"):
            ExperimentConfig(matrix_a=tmp_path / "a.mtx")

    def test_numeric_ranges(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(max_steps=0)
        with pytest.raises(ValidationError):
            ExperimentConfig(tol=-1.0)
        with pytest.raises(ValidationError):
            ExperimentConfig(inner_tol=2.0)

    def test_inner_tolerance(self):
        lsqr = ExperimentConfig(inner_tol=1e-12).lsqr()
        assert lsqr.atol == 1e-12 and lsqr.btol == 1e-12


class TestExitCodes:
    def test_mapping(self):
        assert exit_code_for(NotConvergedError("x")) == EXIT_NUMERICAL
        assert exit_code_for(ParseError("x", line=3)) == EXIT_CONFIGURATION
        assert exit_code_for(FileNotFoundError("x")) == EXIT_CONFIGURATION
        assert exit_code_for(DomainError("x")) == EXIT_CONFIGURATION


class TestLoadPair:
    """Test building and reading pairs"""

    def test_builtin(self):
        loaded = load_pair(ExperimentConfig(pair="example1", size=30))
        assert loaded.truth is not None
        assert (loaded.A.rows, loaded.L.rows, loaded.A.cols) == (30, 30, 30)

    def test_generated_operators(self, matrix_files):
        a_path, _ = matrix_files
        loaded = load_pair(ExperimentConfig(matrix_a=a_path, matrix_l="@first-derivative"))
        assert loaded.L.shape == (9, 10)
        assert loaded.truth is None
        assert loaded.name == "a"
        assert load_pair(ExperimentConfig(matrix_a=a_path, matrix_l="@scaled-diag")).L.shape == (10, 10)


class TestRunExperiment:
    """Test complete runs and their artifacts"""

    def test_builtin_run(self, tmp_path):
        cfg = ExperimentConfig(pair="Ac_Ls", size=60, max_steps=80, out=tmp_path)
        result = run_experiment(cfg)

        assert result.exit_code == EXIT_SUCCESS
        assert read_header(tmp_path / "history.csv") == HISTORY_HEADER
        assert read_header(tmp_path / "diagnostics.csv") == DIAGNOSTICS_HEADER
        for name in PLOT_FILES:
            assert (tmp_path / name).exists()
        assert read_header(tmp_path / "fig9_residual.csv")[0] == "k"
        assert read_header(tmp_path / "fig4_etaUhat.csv") == ["k", "eta_Uhat", "thm3_4_bound", "eta_U", "eta_Vtilde"]
        assert not (tmp_path / "error.json").exists()

        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["steps"] <= 60
        assert summary["termination_reason"] in ("converged", "breakdown")
        assert summary["swapped"] is False
        assert summary["verifiers_hold"] is True
        pair = summary["pairs"][0]
        assert pair["c"] == pytest.approx(0.75, abs=1e-10)
        assert pair["angle_error"] <= 1e-8
        assert pair["x_angle"] <= 1e-6

    def test_semi_run(self, tmp_path):
        cfg = ExperimentConfig(pair="example1", size=60, reorth="semi", max_steps=40, tol=1e-14, out=tmp_path)
        result = run_experiment(cfg)
        assert result.exit_code == EXIT_SUCCESS
        assert result.summary["strategy"] == "semi"
        assert result.summary["semi_denominator"] == "2k+1"

    def test_file_run(self, tmp_path, matrix_files):
        a_path, l_path = matrix_files
        out = tmp_path / "out"
        cfg = ExperimentConfig(matrix_a=a_path, matrix_l=str(l_path), swap="auto", max_steps=20, out=out)
        result = run_experiment(cfg)

        assert result.exit_code == EXIT_SUCCESS
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n"] == 10
        assert summary["steps"] <= 10
        assert summary["termination_reason"] in ("converged", "breakdown")
        assert "angle_error" not in summary["pairs"][0]
        assert 0.0 <= summary["pairs"][0]["c"] <= 1.0

    def test_breakdown_before_first_step(self, tmp_path):
        """Test a pair whose first v_tilde has no L part still ends successfully"""
        a_path = write_matrix_market(SparseMatrix.from_dense(np.array([[1.0, 0.0], [0.0, 0.0]])), tmp_path / "a.mtx")
        l_path = write_matrix_market(SparseMatrix.from_dense(np.array([[0.0, 1.0]])), tmp_path / "l.mtx")
        out = tmp_path / "out"
        result = run_experiment(ExperimentConfig(matrix_a=a_path, matrix_l=str(l_path), out=out))

        assert result.exit_code == EXIT_SUCCESS
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steps"] == 0
        assert summary["termination_reason"] == "breakdown"
        assert summary["pairs"] == []
        assert summary["final_diagnostics"] is None
        assert (out / "history.csv").exists()
        assert not (out / "diagnostics.csv").exists()

    def test_missing_file(self, tmp_path):
        cfg = ExperimentConfig(matrix_a=tmp_path / "absent.mtx", matrix_l="@first-derivative", out=tmp_path)
        result = run_experiment(cfg)

        assert result.exit_code == EXIT_CONFIGURATION
        record = json.loads((tmp_path / "error.json").read_text())
        assert record["exit_code"] == 2
        assert record["error_type"] == "FileNotFoundError"
        assert not (tmp_path / "summary.json").exists()

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.mtx"
        bad.write_text("%%MatrixMarket matrix coordinate real general\n3 3 1\n1 1 abc\n")
        result = run_experiment(ExperimentConfig(matrix_a=bad, matrix_l="@first-derivative", out=tmp_path))

        assert result.exit_code == EXIT_CONFIGURATION
        assert json.loads((tmp_path / "error.json").read_text())["error_type"] == "ParseError"

    def test_column_mismatch(self, tmp_path, matrix_files):
        a_path, _ = matrix_files
        other = write_matrix_market(SparseMatrix.identity(4), tmp_path / "small.mtx")
        result = run_experiment(ExperimentConfig(matrix_a=a_path, matrix_l=str(other), out=tmp_path))
        assert result.exit_code == EXIT_CONFIGURATION

    def test_unknown_generated_operator(self, tmp_path, matrix_files):
        a_path, _ = matrix_files
        result = run_experiment(ExperimentConfig(matrix_a=a_path, matrix_l="@laplacian", out=tmp_path))
        assert result.exit_code == EXIT_CONFIGURATION
        assert "@laplacian" in result.error

    def test_numerical_failure(self, tmp_path, matrix_files, monkeypatch):
        """Test an LSQR iteration limit ends the run with exit code 1"""
        monkeypatch.setattr(settings, "lsqr_max_iterations", 1)
        a_path, l_path = matrix_files
        cfg = ExperimentConfig(
            matrix_a=a_path,
            matrix_l=str(l_path),
            inner_mode=ProjectionMode.ITERATIVE,
            out=tmp_path,
        )
        result = run_experiment(cfg)

        assert result.exit_code == EXIT_NUMERICAL
        record = json.loads((tmp_path / "error.json").read_text())
        assert record["error_type"] == "NotConvergedError"

    def test_empty_history_has_no_plot_data(self, tmp_path):
        with pytest.raises(ValueError, match="empty history"):
            emit_plot_data(ConvergenceHistory(), [], ArtifactWriter(tmp_path))
        assert list(tmp_path.iterdir()) == []


class TestCli:
    """Test the command-line entry point"""

    def test_success(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(
            sys, "argv",
            ["cli.py", "--pair", "Ac_Ls", "--size", "40", "--max-steps", "60", "--out", str(tmp_path)],
        )
        assert cli.main() is None

        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "history.csv").exists()
        assert "GSVD APPROXIMATION" in capsys.readouterr().out

    def test_invalid_choice(self, tmp_path, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["cli.py", "--reorth", "partial", "--out", str(tmp_path)])
        with pytest.raises(SystemExit) as exc_info:
            cli.main()
        assert exc_info.value.code == 2

    def test_invalid_configuration_writes_error_record(self, tmp_path, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["cli.py", "--size", "0", "--out", str(tmp_path)])
        with pytest.raises(SystemExit) as exc_info:
            cli.main()
        assert exc_info.value.code == 2
        assert json.loads((tmp_path / "error.json").read_text())["error_type"] == "ValidationError"

    def test_missing_file_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(
            sys, "argv",
            ["cli.py", "--matrix-a", str(tmp_path / "absent.mtx"), "--matrix-l", "@first-derivative",
             "--out", str(tmp_path)],
        )
        with pytest.raises(SystemExit) as exc_info:
            cli.main()
        assert exc_info.value.code == 2

    def test_config_from_args(self, tmp_path):
        args = cli.build_parser().parse_args(
            ["--pair", "example2", "--size", "50", "--reorth", "none", "--which", "smallest", "--out", str(tmp_path)]
        )
        cfg = cli.config_from_args(args)
        assert cfg.pair == "example2"
        assert cfg.reorth.value == "none"
        assert cfg.which.value == "smallest"

    def test_format_summary(self):
        summary = {
            "pair": "Ac_Ls", "m": 40, "p": 40, "n": 40,
            "strategy": "full", "mode": "reference", "swapped": False,
            "steps": 12, "termination_reason": "converged",
            "pairs": [
                {"index": 1, "c": 0.75, "s": 0.66, "residual_bound": 1e-12,
                 "residual_direct": None, "angle_error": 1e-15},
            ],
        }
        text = cli.format_summary(summary)
        assert "Steps: 12 (converged)" in text
        assert "angle error vs ground truth" in text


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
