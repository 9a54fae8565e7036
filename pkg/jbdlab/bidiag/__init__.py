"""
Bidiagonal factor algebra

Storage for the lower bidiagonal B_k and upper bidiagonal B_hat_k produced
by the joint bidiagonalization, their singular value decompositions,
smallest singular values for inverse-norm tracking, the coupling relation
between the two factors and the tridiagonal identity defect
B^T B + P B_hat^T B_hat P - I.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from jbdlab.config import EPS
from jbdlab.errors import (
    BreakdownError,
    DimensionMismatchError,
    NoConvergenceError,
    NonFiniteError,
)

logger = logging.getLogger(__name__)


def _coefficients(values, name: str, length: int) -> np.ndarray:
    array = np.array(values, dtype=np.float64).reshape(-1)
    if array.shape[0] != length:
        raise DimensionMismatchError(f"{name} must have {length} entries, got {array.shape[0]}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"{name} contains invalid values (NaN or Inf)")
    if np.any(array < 0):
        raise ValueError(f"{name} coefficients must be nonnegative (they are vector norms)")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LowerBidiagonal:
    """
    The (k+1) x k lower bidiagonal matrix B_k.

    `beta[0]` is the norm of the starting vector; the matrix itself uses
    beta[1:], one subdiagonal entry per column.
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha).reshape(-1)
        object.__setattr__(self, "alpha", _coefficients(alpha, "alpha", alpha.shape[0]))
        object.__setattr__(self, "beta", _coefficients(self.beta, "beta", alpha.shape[0] + 1))

    @property
    def order(self) -> int:
        return self.alpha.shape[0]

    def to_dense(self) -> np.ndarray:
        k = self.order
        dense = np.zeros((k + 1, k), order="F")
        dense[np.arange(k), np.arange(k)] = self.alpha
        dense[np.arange(1, k + 1), np.arange(k)] = self.beta[1:]
        return dense

    def leading_square(self) -> "UpperBidiagonal":
        """
        The k x k leading recurrence matrix: alpha on the diagonal and
        beta_2..beta_k on the superdiagonal.

        It is the transpose of the first k rows of B_k.
        """
        return UpperBidiagonal(self.alpha, self.beta[1 : self.order])


@dataclass(frozen=True)
class UpperBidiagonal:
    """The k x k upper bidiagonal matrix B_hat_k."""

    alpha_hat: np.ndarray
    beta_hat: np.ndarray

    def __post_init__(self):
        alpha_hat = np.asarray(self.alpha_hat).reshape(-1)
        k = alpha_hat.shape[0]
        object.__setattr__(self, "alpha_hat", _coefficients(alpha_hat, "alpha_hat", k))
        object.__setattr__(self, "beta_hat", _coefficients(self.beta_hat, "beta_hat", max(k - 1, 0)))

    @property
    def order(self) -> int:
        return self.alpha_hat.shape[0]

    def to_dense(self) -> np.ndarray:
        k = self.order
        dense = np.zeros((k, k), order="F")
        dense[np.arange(k), np.arange(k)] = self.alpha_hat
        dense[np.arange(k - 1), np.arange(1, k)] = self.beta_hat
        return dense


@dataclass(frozen=True)
class SignAlternation:
    """P = diag(1, -1, 1, ...) of the given order."""

    order: int

    def diagonal(self) -> np.ndarray:
        signs = np.ones(self.order)
        signs[1::2] = -1.0
        return signs

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diagonal())

    def apply_right(self, matrix: np.ndarray) -> np.ndarray:
        """Return M P (flips the sign of every second column)."""
        if matrix.shape[-1] != self.order:
            raise DimensionMismatchError(
                f"cannot apply order-{self.order} sign alternation to {matrix.shape[-1]} columns"
            )
        return matrix * self.diagonal()

    def apply_left(self, matrix: np.ndarray) -> np.ndarray:
        """Return P M (flips the sign of every second row)."""
        if matrix.shape[0] != self.order:
            raise DimensionMismatchError(
                f"cannot apply order-{self.order} sign alternation to {matrix.shape[0]} rows"
            )
        signs = self.diagonal()
        return signs[:, None] * matrix if matrix.ndim == 2 else signs * matrix


@dataclass(frozen=True)
class BidiagonalSvd:
    """
    Compact SVD B = left @ diag(values) @ right.T with values descending.

    Consumers that need the ascending presentation reverse the columns
    themselves.
    """

    values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def order(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.values) @ self.right.T


Bidiagonal = Union[LowerBidiagonal, UpperBidiagonal]


def _qr_iteration_svd(dense: np.ndarray, compute_vectors: bool = True):
    """
    SVD by LAPACK's gesvd driver.

    The reduction of an already bidiagonal matrix is trivial, and the
    bidiagonal stage is the implicit zero-shift QR iteration, so small
    singular values keep relative accuracy and B^T B is never formed.
    """
    try:
        return scipy.linalg.svd(
            dense,
            full_matrices=False,
            compute_uv=compute_vectors,
            lapack_driver="gesvd",
            check_finite=False,
        )
    except np.linalg.LinAlgError as e:
        logger.error(f"Bidiagonal QR iteration failed on a {dense.shape} matrix: {str(e)}")
        raise NoConvergenceError(f"bidiagonal SVD did not converge: {str(e)}") from e


def _svd(matrix: Bidiagonal) -> BidiagonalSvd:
    if matrix.order < 1:
        raise ValueError("SVD of an empty bidiagonal matrix")
    left, values, right_t = _qr_iteration_svd(matrix.to_dense())
    return BidiagonalSvd(
        values=values,
        left=np.asfortranarray(left),
        right=np.asfortranarray(right_t.T),
    )


def svd_lower(matrix: LowerBidiagonal) -> BidiagonalSvd:
    """
    Compact SVD of B_k.

    Returns:
        BidiagonalSvd with k descending values, a (k+1) x k left factor and
        a k x k right factor

    Raises:
        NoConvergenceError: If the QR iteration fails
    """
    return _svd(matrix)


def svd_upper(matrix: UpperBidiagonal) -> BidiagonalSvd:
    """
    SVD of the square B_hat_k, values stored descending.

    Raises:
        NoConvergenceError: If the QR iteration fails
    """
    return _svd(matrix)


def singular_values(matrix: Bidiagonal) -> np.ndarray:
    """Descending singular values without the factors."""
    if matrix.order < 1:
        return np.zeros(0)
    return _qr_iteration_svd(matrix.to_dense(), compute_vectors=False)


def smallest_singular_value(matrix: Bidiagonal) -> float:
    """Smallest singular value; callers form inverse norms as 1 / sigma_min."""
    return float(singular_values(matrix)[-1])


def largest_singular_value(matrix: Bidiagonal) -> float:
    return float(singular_values(matrix)[0])


def inverse_norm(matrix: Bidiagonal) -> float:
    """Spectral norm of the inverse (infinite when singular)."""
    sigma_min = smallest_singular_value(matrix)
    return np.inf if sigma_min == 0.0 else 1.0 / sigma_min


def coupling_coefficient(
    alpha_next: float,
    beta_next: float,
    alpha_hat: float,
    tol: float = EPS,
) -> float:
    """
    Superdiagonal entry of B_hat: alpha_{i+1} * beta_{i+1} / alpha_hat_i.

    Raises:
        BreakdownError: If alpha_hat is at or below tol
    """
    if alpha_hat <= tol:
        raise BreakdownError(
            f"alpha_hat = {alpha_hat:.3e} at or below breakdown tolerance {tol:.3e}",
            coefficient="alpha_hat",
            value=float(alpha_hat),
        )
    return alpha_next * beta_next / alpha_hat


@dataclass(frozen=True)
class IdentityDefect:
    """
    Symmetric tridiagonal E_k = B^T B + P B_hat^T B_hat P - I.

    Only the diagonal and subdiagonal are stored; `dense` holds the fully
    materialized matrix when it was requested for a cross-check.
    """

    diagonal: np.ndarray
    subdiagonal: np.ndarray
    norm: float
    dense: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.diagonal.shape[0]

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.subdiagonal, -1)
            + np.diag(self.subdiagonal, 1)
        )

    def bandwidth_excess(self) -> float:
        """Largest entry of the materialized defect outside the tridiagonal band."""
        if self.dense is None:
            return 0.0
        outside = np.triu(self.dense, 2) + np.tril(self.dense, -2)
        return float(np.max(np.abs(outside))) if outside.size else 0.0


def identity_defect(
    lower: LowerBidiagonal,
    upper: UpperBidiagonal,
    dense: bool = False,
) -> IdentityDefect:
    """
    Tridiagonal defect of the coupling identity between B_k and B_hat_k.

    Args:
        lower: B_k
        upper: B_hat_k of the same order
        dense: Also materialize the full defect for bandwidth cross-checks

    Raises:
        DimensionMismatchError: If the orders differ
    """
    k = lower.order
    if upper.order != k:
        raise DimensionMismatchError(f"orders differ: B_k is {k}, B_hat_k is {upper.order}")

    alpha, beta = lower.alpha, lower.beta
    alpha_hat, beta_hat = upper.alpha_hat, upper.beta_hat

    diagonal = alpha**2 + beta[1:] ** 2 + alpha_hat**2 - 1.0
    diagonal[1:] += beta_hat**2
    subdiagonal = alpha[1:] * beta[1:k] - alpha_hat[:-1] * beta_hat

    if k == 1:
        norm = abs(float(diagonal[0]))
    else:
        eigenvalues = scipy.linalg.eigvalsh_tridiagonal(diagonal, subdiagonal, check_finite=False)
        norm = float(np.max(np.abs(eigenvalues)))

    full = None
    if dense:
        b = lower.to_dense()
        b_bar = SignAlternation(k).apply_right(upper.to_dense())
        full = b.T @ b + b_bar.T @ b_bar - np.eye(k)

    return IdentityDefect(diagonal=diagonal, subdiagonal=subdiagonal, norm=norm, dense=full)


def check_interlacing(
    previous: np.ndarray,
    current: np.ndarray,
    tol: Optional[float] = None,
) -> bool:
    """
    Check that step-k singular values interlace those of step k+1.

    Both arrays are descending; `current` has one more value than `previous`.
    """
    if current.shape[0] != previous.shape[0] + 1:
        raise DimensionMismatchError(
            f"expected {previous.shape[0] + 1} current values, got {current.shape[0]}"
        )
    if tol is None:
        tol = 100 * EPS * current.shape[0] * max(1.0, float(current[0]))
    upper_ok = np.all(current[:-1] >= previous - tol)
    lower_ok = np.all(previous >= current[1:] - tol)
    return bool(upper_ok and lower_ok)


def norm_caps(lower: LowerBidiagonal, upper: UpperBidiagonal) -> Tuple[float, float]:
    """Spectral norms of B_k and of the sign-flipped B_hat_k P."""
    return largest_singular_value(lower), largest_singular_value(upper)
