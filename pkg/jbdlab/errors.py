"""
Exception hierarchy for jbdlab

Validation failures subclass ValueError and numerical failures subclass
RuntimeError, so callers that only know the builtin exceptions keep working.
"""

from typing import Any, Optional


class JbdError(Exception):
    """Base class for every error raised by jbdlab."""


class ConfigurationError(JbdError, ValueError):
    """Invalid experiment or solver configuration."""


class DimensionMismatchError(JbdError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(JbdError, ValueError):
    """Input contains NaN or Inf entries."""


class DomainError(JbdError, ValueError):
    """Argument lies outside the domain of a constructor."""


class ZeroVectorError(JbdError, ValueError):
    """A vector that must be nonzero has zero norm."""


class ZeroStartError(ZeroVectorError):
    """The starting vector of a recurrence is zero."""


class RankDeficientError(JbdError, ValueError):
    """A factorization met a diagonal below the rank tolerance."""

    def __init__(self, message: str, column: int, value: float, tolerance: float):
        super().__init__(message)
        self.column = column
        self.value = value
        self.tolerance = tolerance


class BreakdownToZeroError(JbdError, ValueError):
    """Orthogonalization removed (numerically) all of a vector."""

    def __init__(self, message: str, remaining: float = 0.0, tolerance: float = 0.0):
        super().__init__(message)
        self.remaining = remaining
        self.tolerance = tolerance


class InsufficientStepsError(JbdError, ValueError):
    """More Ritz pairs were requested than steps were taken."""


class MatrixMarketError(JbdError, ValueError):
    """Base class for Matrix Market reading problems."""


class ParseError(MatrixMarketError):
    """Malformed Matrix Market content."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedFieldError(MatrixMarketError):
    """Matrix Market field or layout this reader does not handle."""


class BreakdownError(JbdError):
    """
    A recurrence coefficient fell below the breakdown tolerance.

    This is the lucky case: an invariant subspace has been found. The state
    that was being advanced is attached so drivers can finish cleanly.
    """

    def __init__(
        self,
        message: str,
        coefficient: str,
        value: float,
        state: Optional[Any] = None,
    ):
        super().__init__(message)
        self.coefficient = coefficient
        self.value = value
        self.state = state


class NumericalError(JbdError, RuntimeError):
    """Base class for numerical failures that end a run."""


class NoConvergenceError(NumericalError):
    """A dense kernel iteration failed to converge."""


class NotConvergedError(NumericalError):
    """The inner least squares solver hit its iteration limit."""


class MissingCacheError(JbdError, RuntimeError):
    """Reference-mode work requested without a cached dense Q factor."""


class OutputError(JbdError, OSError):
    """Artifacts could not be written."""
