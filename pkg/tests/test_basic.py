"""
Tests for jbdlab configuration, errors and artifact writing

This module contains basic tests for the settings layer, the exception
hierarchy and the CSV/JSON writers used by the experiment runner.
"""

import csv
import json

import numpy as np
import pytest

import jbdlab
from jbdlab.config import EPS, Settings, settings
from jbdlab.errors import (
    BreakdownError,
    ConfigurationError,
    DimensionMismatchError,
    JbdError,
    MissingCacheError,
    NoConvergenceError,
    NotConvergedError,
    NumericalError,
    OutputError,
    ParseError,
    RankDeficientError,
    UnsupportedFieldError,
    ZeroStartError,
    ZeroVectorError,
)
from jbdlab.utils import ArtifactWriter, format_float, to_jsonable


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


class TestConfiguration:
    """Test configuration management"""

    def test_default_settings(self):
        """Test that default settings are correct"""
        assert settings.out_dir == "results"
        assert settings.semi_denominator in ("2k+1", "k")
        assert settings.reference_max_columns == 2048
        assert settings.lsqr_atol == pytest.approx(100 * EPS)
        assert settings.lsqr_btol == pytest.approx(100 * EPS)

    def test_verifier_settings(self):
        """Test verifier allowances are positive multiples of eps"""
        assert settings.small_factor > 0
        assert settings.basis_factor > settings.small_factor
        assert 0 < settings.projection_relative_slack < 1
        assert settings.ghost_radius > 0

    def test_environment_override(self, monkeypatch):
        """Test JBD_ environment variables override defaults"""
        monkeypatch.setenv("JBD_DIAG_STRIDE", "7")
        monkeypatch.setenv("JBD_SEMI_DENOMINATOR", "k")
        overridden = Settings()
        assert overridden.diag_stride == 7
        assert overridden.semi_denominator == "k"

    def test_eps_is_double_precision(self):
        """Test EPS is the float64 unit roundoff spacing"""
        assert EPS == np.finfo(np.float64).eps


class TestErrors:
    """Test the exception hierarchy"""

    def test_validation_errors_are_value_errors(self):
        """Test validation failures can be caught as ValueError"""
        for error_type in (ConfigurationError, DimensionMismatchError, ZeroVectorError):
            assert issubclass(error_type, ValueError)
            assert issubclass(error_type, JbdError)

    def test_numerical_errors_are_runtime_errors(self):
        """Test numerical failures can be caught as RuntimeError"""
        assert issubclass(NoConvergenceError, NumericalError)
        assert issubclass(NotConvergedError, NumericalError)
        assert issubclass(NumericalError, RuntimeError)
        assert issubclass(MissingCacheError, RuntimeError)

    def test_zero_start_is_zero_vector(self):
        """Test a zero starting vector is a zero-vector error"""
        assert issubclass(ZeroStartError, ZeroVectorError)

    def test_output_error_is_os_error(self):
        """Test output failures can be caught as OSError"""
        assert issubclass(OutputError, OSError)

    def test_parse_error_carries_line(self):
        """Test ParseError formats and keeps the line number"""
        error = ParseError("bad entry", 12)
        assert error.line == 12
        assert str(error) == "line 12: bad entry"
        assert not isinstance(UnsupportedFieldError("complex"), ParseError)

    def test_rank_deficient_carries_column(self):
        """Test RankDeficientError records where the rank test failed"""
        error = RankDeficientError("weak", column=3, value=1e-20, tolerance=1e-14)
        assert error.column == 3
        assert error.value == 1e-20
        assert error.tolerance == 1e-14

    def test_breakdown_carries_state(self):
        """Test BreakdownError keeps the coefficient and attached state"""
        marker = object()
        error = BreakdownError("tiny", coefficient="beta_3", value=1e-18, state=marker)
        assert error.coefficient == "beta_3"
        assert error.state is marker
        assert not isinstance(error, NumericalError)


class TestVersion:
    """Test package metadata"""

    def test_version(self):
        """Test version string is present"""
        assert jbdlab.__version__ == "0.1.0"


class TestArtifactWriting:
    """Test CSV and JSON artifact helpers"""

    def test_format_float_round_trips(self):
        """Test floats are written with enough digits to round-trip"""
        value = 0.1 + 0.2
        assert float(format_float(value)) == value
        assert format_float(np.float64(1.0) / 3.0) == f"{1.0 / 3.0:.17g}"

    def test_format_other_values(self):
        """Test integers, booleans and None"""
        assert format_float(5) == "5"
        assert format_float(np.int64(5)) == "5"
        assert format_float(True) == "true"
        assert format_float(None) == ""

    def test_to_jsonable_non_finite(self):
        """Test non-finite floats become strings"""
        payload = to_jsonable({"a": np.inf, "b": -np.inf, "c": np.nan, "d": np.float64(2.5)})
        assert payload == {"a": "inf", "b": "-inf", "c": "nan", "d": 2.5}
        json.dumps(payload, allow_nan=False)

    def test_to_jsonable_arrays(self):
        """Test numpy arrays and scalars become plain lists"""
        assert to_jsonable(np.array([1.0, 2.0])) == [1.0, 2.0]
        assert to_jsonable((np.int32(1), np.bool_(True))) == [1, True]

    def test_write_csv(self, tmp_path):
        """Test a CSV is written with header and tracked"""
        writer = ArtifactWriter(tmp_path / "out")
        path = writer.write_csv("table.csv", ["k", "value"], [[1, 0.5], [2, np.float64(0.25)]])

        assert path.exists()
        assert writer.written == [path]
        rows = read_rows(path)
        assert rows[0] == {"k": "1", "value": "0.5"}
        assert float(rows[1]["value"]) == 0.25

    def test_write_records(self, tmp_path):
        """Test records share the keys of the first record"""
        writer = ArtifactWriter(tmp_path)
        path = writer.write_records("r.csv", [{"a": 1, "b": 2.0}, {"a": 3, "b": 4.0}])
        rows = read_rows(path)
        assert list(rows[0].keys()) == ["a", "b"]
        assert rows[1]["a"] == "3"

    def test_write_records_empty(self, tmp_path):
        """Test writing no records fails"""
        with pytest.raises(ValueError, match="no records"):
            ArtifactWriter(tmp_path).write_records("r.csv", [])

    def test_write_json(self, tmp_path):
        """Test JSON output is strict"""
        path = ArtifactWriter(tmp_path).write_json("s.json", {"x": np.inf, "k": 3})
        assert json.loads(path.read_text()) == {"x": "inf", "k": 3}

    def test_unwritable_directory(self, tmp_path):
        """Test an output path blocked by a file raises OutputError"""
        blocker = tmp_path / "blocked"
        blocker.write_text("not a directory")
        writer = ArtifactWriter(blocker / "sub")
        with pytest.raises(OutputError):
            writer.write_csv("t.csv", ["k"], [[1]])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
