"""
Matrix pairs with known generalized singular value decompositions

Every constructed pair has the form A = C D, L = S D with C, S diagonal,
C^2 + S^2 = I and D symmetric orthogonal, so the stack (A; L) has
orthonormal columns and the GSVD is known exactly. Also builds the sparse
regularization operators used with external matrices and a dense oracle
for small cases.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from jbdlab.dense import householder_qr
from jbdlab.errors import DomainError
from jbdlab.sparse import SparseMatrix

logger = logging.getLogger(__name__)

BUILTIN_PAIRS = ("Ac_Ls", "example1", "example2")


def sine_orthogonal(n: int) -> np.ndarray:
    """Symmetric orthogonal D with d_ij = sqrt(2/(n+1)) sin(i j pi / (n+1))."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    index = np.arange(1, n + 1)
    return np.asfortranarray(
        np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(index, index) * np.pi / (n + 1))
    )


@dataclass(frozen=True)
class ConstructedPair:
    """A pair {A, L} together with its exact GSVD."""

    name: str
    A: SparseMatrix
    L: SparseMatrix
    c: np.ndarray
    s: np.ndarray
    right_vectors: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def left_vector_a(self, index: int) -> np.ndarray:
        """Left vector of A for pair `index` (0-based): the standard basis vector."""
        e = np.zeros(self.A.rows)
        e[index] = 1.0
        return e

    def left_vector_l(self, index: int) -> np.ndarray:
        e = np.zeros(self.L.rows)
        e[index] = 1.0
        return e

    def largest(self) -> Tuple[float, float, np.ndarray]:
        """(c, s, right vector) of the largest generalized singular value."""
        order = np.lexsort((self.s, -self.c))
        top = int(order[0])
        return float(self.c[top]), float(self.s[top]), self.right_vectors[:, top]

    def sorted_cs(self) -> Tuple[np.ndarray, np.ndarray]:
        """c and s ordered by decreasing c."""
        order = np.argsort(-self.c, kind="stable")
        return self.c[order], self.s[order]


def make_pair_cs_spectrum(n: int, c: Sequence[float], name: str = "cs") -> ConstructedPair:
    """
    Build A = diag(c) D and L = diag(s) D with s = sqrt(1 - c^2).

    Args:
        n: Order of the pair
        c: n values in [0, 1]
        name: Label carried into reports

    Raises:
        DomainError: If a value lies outside [0, 1] or the length is not n
    """
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.shape[0] != n:
        raise DomainError(f"expected {n} c-values, got {c.shape[0]}")
    if np.any(~np.isfinite(c)) or np.any(c < 0.0) or np.any(c > 1.0):
        raise DomainError("every c-value must lie in [0, 1]")

    s = np.sqrt((1.0 - c) * (1.0 + c))
    D = sine_orthogonal(n)
    A = SparseMatrix.from_dense(c[:, None] * D)
    L = SparseMatrix.from_dense(s[:, None] * D)
    logger.debug(f"Constructed pair '{name}' of order {n}")
    return ConstructedPair(name=name, A=A, L=L, c=c, s=s, right_vectors=D)


def ac_ls_spectrum(n: int) -> np.ndarray:
    """c = (3n/2, 3n/2 - 1, ..., n/2 + 1) / (2n)."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return (1.5 * n - np.arange(n)) / (2.0 * n)


def example1_spectrum(n: int) -> np.ndarray:
    """
    Spectrum with double values at 0.99, 0.95 and 0.

    Leading values 0.99, 0.99, 0.95, 0.95, 0.90, 0.85, an interior segment
    linearly spaced from 0.80 to 0.30, and trailing values 0.20, 0.15, 0.10,
    0, 0.
    """
    if n < 12:
        raise DomainError(f"the double-cluster spectrum needs n >= 12, got {n}")
    head = [0.99, 0.99, 0.95, 0.95, 0.90, 0.85]
    tail = [0.20, 0.15, 0.10, 0.0, 0.0]
    return np.concatenate([head, np.linspace(0.80, 0.30, n - 11), tail])


def example2_spectrum(n: int) -> np.ndarray:
    """Spectrum 1.0 -> 0.7 over four values, 0.65 -> 0.15 over n - 6, then 0.10, 0.05."""
    if n < 6:
        raise DomainError(f"this spectrum needs n >= 6, got {n}")
    return np.concatenate(
        [np.linspace(1.0, 0.7, 4), np.linspace(0.65, 0.15, n - 6), [0.10, 0.05]]
    )


def make_example2_pair(n: int) -> ConstructedPair:
    """
    Pair whose largest generalized singular value is infinite (c = 1, s = 0).

    Raises:
        DomainError: If n < 6
    """
    return make_pair_cs_spectrum(n, example2_spectrum(n), name="example2")


def make_first_derivative(n: int) -> SparseMatrix:
    """
    (n-1) x n forward difference operator: +1 on the diagonal, -1 above it.

    Raises:
        DomainError: If n < 2
    """
    if n < 2:
        raise DomainError(f"first derivative operator needs n >= 2, got {n}")
    operator = scipy.sparse.diags([1.0, -1.0], [0, 1], shape=(n - 1, n), format="csr")
    return SparseMatrix.from_scipy(operator)


def make_scaled_diag(m: int) -> SparseMatrix:
    """
    Diagonal matrix diag(2m, 2m-1, ..., m+1) / 1000.

    Raises:
        DomainError: If m < 1
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    values = (2.0 * m - np.arange(m)) / 1000.0
    return SparseMatrix.from_scipy(scipy.sparse.diags(values, 0, format="csr"))


def build_pair(name: str, n: int) -> ConstructedPair:
    """
    Builtin pair by name.

    Raises:
        DomainError: For an unknown name or an invalid size
    """
    if name == "Ac_Ls":
        return make_pair_cs_spectrum(n, ac_ls_spectrum(n), name=name)
    if name == "example1":
        return make_pair_cs_spectrum(n, example1_spectrum(n), name=name)
    if name == "example2":
        return make_example2_pair(n)
    raise DomainError(f"unknown builtin pair '{name}' (choose from {', '.join(BUILTIN_PAIRS)})")


@dataclass(frozen=True)
class ReferenceGsvd:
    """Dense GSVD of a small pair: c descending with matching s and right vectors."""

    c: np.ndarray
    s: np.ndarray
    right_vectors: Optional[np.ndarray] = field(default=None, repr=False)


def reference_gsvd(A: SparseMatrix, L: SparseMatrix) -> ReferenceGsvd:
    """
    Dense GSVD oracle: QR of the stack, then the SVD of its top block.

    With Z = QR and Q_A = P_A C W^T, the pairs are {c_i, sqrt(1 - c_i^2)} and
    the right vectors are the columns of inv(R) W.

    Raises:
        RankDeficientError: If the stack does not have full column rank
    """
    stacked = np.vstack([A.to_dense(), L.to_dense()])
    q, r = householder_qr(stacked)
    _, c, wt = scipy.linalg.svd(q[: A.rows], full_matrices=False, lapack_driver="gesvd")
    if c.shape[0] < A.cols:
        c = np.concatenate([c, np.zeros(A.cols - c.shape[0])])
    c = np.clip(c, 0.0, 1.0)
    s = np.sqrt((1.0 - c) * (1.0 + c))

    right = None
    if wt.shape[0] == A.cols:
        right = scipy.linalg.solve_triangular(r, wt.T, check_finite=False)
    return ReferenceGsvd(c=c, s=s, right_vectors=right)
