"""
Dense vector and matrix kernels

Householder QR of the stacked pair, modified Gram-Schmidt
reorthogonalization, subspace angles, and the column-major basis storage
shared by the Lanczos recurrences. Dense matrices are plain float64 numpy
arrays in Fortran order.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from jbdlab.config import EPS
from jbdlab.errors import (
    BreakdownToZeroError,
    DimensionMismatchError,
    NonFiniteError,
    RankDeficientError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """
    Convert input to a finite column-major float64 matrix.

    Raises:
        DimensionMismatchError: If the input is not two-dimensional
        NonFiniteError: If any entry is NaN or Inf
    """
    matrix = np.asfortranarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError(f"{name} contains invalid values (NaN or Inf)")
    return matrix


def as_vector(values, name: str = "vector") -> np.ndarray:
    """
    Convert input to a finite float64 vector.

    Raises:
        DimensionMismatchError: If the input is not one-dimensional
        NonFiniteError: If any entry is NaN or Inf
    """
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteError(f"{name} contains invalid values (NaN or Inf)")
    return vector


def householder_qr(
    matrix: np.ndarray,
    tol: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Compact Householder QR with a nonnegative diagonal in R.

    Args:
        matrix: Dense matrix with rows >= cols and full column rank
        tol: Rank tolerance; defaults to max(rows, cols) * eps * ||M||_F

    Returns:
        Tuple of (Q, R) with Q column-orthonormal and R upper triangular

    Raises:
        DimensionMismatchError: If the matrix is wider than tall
        RankDeficientError: If a diagonal entry of R falls below tolerance
    """
    matrix = as_matrix(matrix)
    rows, cols = matrix.shape
    if rows < cols:
        raise DimensionMismatchError(
            f"QR needs rows >= cols, got {rows}x{cols}"
        )

    # LAPACK geqrf: Householder reflectors, Q accumulated by orgqr
    q, r = scipy.linalg.qr(matrix, mode="economic", check_finite=False)

    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = np.asfortranarray(q * signs)
    r = np.asfortranarray(r * signs[:, None])

    if tol is None:
        tol = max(rows, cols) * EPS * np.linalg.norm(matrix, "fro")
    diagonal = np.diag(r)
    weak = np.flatnonzero(diagonal <= tol)
    if weak.size:
        column = int(weak[0])
        raise RankDeficientError(
            f"R[{column}, {column}] = {diagonal[column]:.3e} is below the rank "
            f"tolerance {tol:.3e}; the stacked matrix is not of full column rank",
            column=column,
            value=float(diagonal[column]),
            tolerance=float(tol),
        )

    return q, r


def project_out(vector: np.ndarray, basis: np.ndarray, passes: int = 2) -> np.ndarray:
    """Subtract projections onto basis columns one at a time, `passes` times."""
    result = np.array(vector, dtype=np.float64)
    for _ in range(passes):
        for j in range(basis.shape[1]):
            column = basis[:, j]
            result -= (column @ result) * column
    return result


def mgs_orthogonalize(
    vector: np.ndarray,
    basis: np.ndarray,
    passes: int = 2,
    tol: Optional[float] = None,
) -> np.ndarray:
    """
    Orthogonalize a vector against the columns of a basis by modified Gram-Schmidt.

    Args:
        vector: Vector to orthogonalize (not modified)
        basis: Matrix with unit-norm columns
        passes: Number of sequential sweeps, 1 or 2
        tol: Breakdown tolerance on the result norm; defaults to len(v) * eps * ||v||

    Returns:
        The orthogonalized vector

    Raises:
        DimensionMismatchError: If vector and basis rows differ
        BreakdownToZeroError: If the remaining norm falls below tolerance
    """
    if passes not in (1, 2):
        raise ValueError(f"passes must be 1 or 2, got {passes}")
    vector = as_vector(vector)
    if basis.ndim != 2 or basis.shape[0] != vector.shape[0]:
        raise DimensionMismatchError(
            f"basis with shape {basis.shape} does not match vector length {vector.shape[0]}"
        )

    original = float(np.linalg.norm(vector))
    result = project_out(vector, basis, passes)
    remaining = float(np.linalg.norm(result))

    if tol is None:
        tol = vector.shape[0] * EPS * original
    if remaining < tol or remaining == 0.0:
        raise BreakdownToZeroError(
            f"orthogonalization left norm {remaining:.3e} (tolerance {tol:.3e}); "
            "the vector lies numerically in the span of the basis",
            remaining=remaining,
            tolerance=float(tol),
        )
    return result


def subspace_angle_sin(x: np.ndarray, y: np.ndarray) -> float:
    """
    Sine of the angle between two nonzero vectors.

    Both inputs are normalized first, so the value is invariant under
    nonzero scaling.

    Raises:
        ZeroVectorError: If either vector has zero norm
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise DimensionMismatchError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")

    x_norm = np.linalg.norm(x)
    y_norm = np.linalg.norm(y)
    if x_norm == 0.0 or y_norm == 0.0:
        raise ZeroVectorError("subspace angle undefined for a zero vector")

    x_unit = x / x_norm
    y_unit = y / y_norm
    orthogonal = x_unit - (y_unit @ x_unit) * y_unit
    return float(min(1.0, np.linalg.norm(orthogonal)))


class GrowingBasis:
    """
    Column-major basis storage with amortized contiguous append.

    Columns are stored in a Fortran-ordered buffer whose capacity doubles
    when full; `matrix` is a view of the filled part.
    """

    def __init__(self, dim: int, capacity: int = 16):
        self.dim = dim
        self._data = np.zeros((dim, max(1, capacity)), dtype=np.float64, order="F")
        self._count = 0

    def __len__(self) -> int:
        return self._count

    @property
    def matrix(self) -> np.ndarray:
        return self._data[:, : self._count]

    def column(self, index: int) -> np.ndarray:
        if not -self._count <= index < self._count:
            raise IndexError(f"column {index} out of range for {self._count} columns")
        return self._data[:, index % self._count]

    def append(self, column: np.ndarray) -> None:
        if column.shape != (self.dim,):
            raise DimensionMismatchError(
                f"column of shape {column.shape} does not fit basis of dimension {self.dim}"
            )
        if self._count == self._data.shape[1]:
            grown = np.zeros((self.dim, 2 * self._data.shape[1]), dtype=np.float64, order="F")
            grown[:, : self._count] = self._data
            self._data = grown
        self._data[:, self._count] = column
        self._count += 1

    def replace(self, index: int, column: np.ndarray) -> None:
        """Overwrite a stored column in place."""
        if column.shape != (self.dim,):
            raise DimensionMismatchError(
                f"column of shape {column.shape} does not fit basis of dimension {self.dim}"
            )
        self.column(index)[:] = column

    def copy(self) -> "GrowingBasis":
        clone = GrowingBasis(self.dim, capacity=max(1, self._count))
        clone._data[:, : self._count] = self.matrix
        clone._count = self._count
        return clone
