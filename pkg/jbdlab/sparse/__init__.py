"""
Sparse operators and Matrix Market file support

Compressed-row storage for A and L, products with the matrix and its
transpose, and the coordinate-format reader/writer the experiment runner
ingests external matrices with.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from jbdlab.dense import as_matrix, as_vector
from jbdlab.errors import (
    DimensionMismatchError,
    NonFiniteError,
    OutputError,
    ParseError,
    UnsupportedFieldError,
)

logger = logging.getLogger(__name__)

MM_BANNER = "%%MatrixMarket"
SUPPORTED_FIELDS = ("real", "integer", "double")
SUPPORTED_SYMMETRY = ("general", "symmetric")


def _canonical_csr(matrix) -> scipy.sparse.csr_array:
    """Sum duplicates, drop explicit zeros and sort column indices."""
    csr = scipy.sparse.csr_array(matrix, dtype=np.float64)
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return csr


@dataclass(frozen=True)
class SparseMatrix:
    """
    Immutable compressed-row sparse matrix.

    Column indices are strictly increasing within each row and every stored
    value is finite and nonzero.
    """

    csr: scipy.sparse.csr_array

    def __post_init__(self):
        if not np.all(np.isfinite(self.csr.data)):
            raise NonFiniteError("sparse matrix contains invalid values (NaN or Inf)")

    @classmethod
    def from_scipy(cls, matrix) -> "SparseMatrix":
        return cls(_canonical_csr(matrix))

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls(_canonical_csr(as_matrix(dense)))

    @classmethod
    def from_coo(cls, rows, cols, values, shape) -> "SparseMatrix":
        """Build from coordinate triplets; duplicate coordinates are summed."""
        coo = scipy.sparse.coo_array(
            (np.asarray(values, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=shape,
        )
        return cls(_canonical_csr(coo))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(_canonical_csr(scipy.sparse.identity(n, format="csr")))

    @property
    def rows(self) -> int:
        return self.csr.shape[0]

    @property
    def cols(self) -> int:
        return self.csr.shape[1]

    @property
    def shape(self) -> tuple:
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def indptr(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    def to_dense(self) -> np.ndarray:
        return np.asfortranarray(self.csr.toarray())

    def as_operator(self) -> LinearOperator:
        return aslinearoperator(self.csr)


def stack(top: SparseMatrix, bottom: SparseMatrix) -> SparseMatrix:
    """Stack two matrices with a shared column count."""
    if top.cols != bottom.cols:
        raise DimensionMismatchError(
            f"cannot stack {top.rows}x{top.cols} on {bottom.rows}x{bottom.cols}: "
            "column counts differ"
        )
    return SparseMatrix(_canonical_csr(scipy.sparse.vstack([top.csr, bottom.csr], format="csr")))


def matvec(matrix: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Return M x."""
    x = as_vector(x, "x")
    if x.shape[0] != matrix.cols:
        raise DimensionMismatchError(
            f"matvec: x has length {x.shape[0]}, matrix has {matrix.cols} columns"
        )
    return matrix.csr @ x


def matvec_transposed(matrix: SparseMatrix, y: np.ndarray) -> np.ndarray:
    """Return M^T y by scattering over the stored rows."""
    y = as_vector(y, "y")
    if y.shape[0] != matrix.rows:
        raise DimensionMismatchError(
            f"matvec_transposed: y has length {y.shape[0]}, matrix has {matrix.rows} rows"
        )
    # csr.T is a CSC view over the same buffers
    return matrix.csr.T @ y


def _parse_banner(line: str) -> tuple:
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0] != MM_BANNER:
        raise ParseError(f"expected '{MM_BANNER} matrix coordinate <field> <symmetry>'", 1)

    obj, layout, field, symmetry = (token.lower() for token in tokens[1:])
    if obj != "matrix":
        raise UnsupportedFieldError(f"unsupported Matrix Market object '{obj}'")
    if layout != "coordinate":
        raise UnsupportedFieldError(f"unsupported Matrix Market format '{layout}'")
    if field not in SUPPORTED_FIELDS:
        raise UnsupportedFieldError(f"unsupported Matrix Market field '{field}'")
    if symmetry not in SUPPORTED_SYMMETRY:
        raise UnsupportedFieldError(f"unsupported Matrix Market symmetry '{symmetry}'")
    return field, symmetry


def read_matrix_market(path: Union[str, Path]) -> SparseMatrix:
    """
    Read a real coordinate Matrix Market file.

    Symmetric storage is expanded to the full matrix and duplicate
    coordinates are summed.

    Args:
        path: File to read

    Returns:
        The sparse matrix

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On malformed content, with the offending line number
        UnsupportedFieldError: For complex, pattern or dense-array files
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Matrix Market file not found: {path}")

    with path.open(encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)

    _, symmetry = _parse_banner(lines[0])

    shape = None
    expected = 0
    entries = 0
    rows, cols, values = [], [], []
    for number, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        tokens = line.split()

        if shape is None:
            if len(tokens) != 3:
                raise ParseError("size line must hold rows, cols and entry count", number)
            try:
                n_rows, n_cols, expected = (int(token) for token in tokens)
            except ValueError as e:
                raise ParseError(f"non-integer size line '{line}'", number) from e
            if n_rows < 0 or n_cols < 0 or expected < 0:
                raise ParseError("negative size", number)
            shape = (n_rows, n_cols)
            continue

        if len(tokens) != 3:
            raise ParseError(f"expected 'row col value', got '{line}'", number)
        try:
            i, j = int(tokens[0]) - 1, int(tokens[1]) - 1
            value = float(tokens[2])
        except ValueError as e:
            raise ParseError(f"cannot parse entry '{line}'", number) from e
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise ParseError(f"index ({i + 1}, {j + 1}) outside {shape[0]}x{shape[1]}", number)
        if not np.isfinite(value):
            raise ParseError(f"non-finite value '{tokens[2]}'", number)

        entries += 1
        rows.append(i)
        cols.append(j)
        values.append(value)
        if symmetry == "symmetric" and i != j:
            rows.append(j)
            cols.append(i)
            values.append(value)

    if shape is None:
        raise ParseError("missing size line", len(lines))
    if entries != expected:
        raise ParseError(f"header declares {expected} entries, found {entries}", len(lines))

    matrix = SparseMatrix.from_coo(rows, cols, values, shape)
    logger.info(f"Read {path.name}: {matrix.rows}x{matrix.cols}, nnz={matrix.nnz} ({symmetry})")
    return matrix


def write_matrix_market(matrix: SparseMatrix, path: Union[str, Path]) -> Path:
    """
    Write a matrix in general coordinate format at 17 significant digits.

    Raises:
        OutputError: If the file cannot be written
    """
    path = Path(path)
    coo = matrix.csr.tocoo()
    lines = [
        f"{MM_BANNER} matrix coordinate real general",
        f"{matrix.rows} {matrix.cols} {matrix.nnz}",
    ]
    lines.extend(
        f"{i + 1} {j + 1} {value:.16e}"
        for i, j, value in zip(coo.row, coo.col, coo.data)
    )
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {path}: {str(e)}")
        raise OutputError(f"cannot write Matrix Market file {path}: {str(e)}") from e
    return path
