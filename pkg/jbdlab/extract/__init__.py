"""
Generalized singular value extraction

Turns the bidiagonal factors of a joint bidiagonalization into approximate
GSVD components: Ritz pairs {c, s}, right vectors x, left vectors y and z,
the computable residual bound used for stopping, and direct residuals.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from jbdlab.bidiag import BidiagonalSvd, svd_lower, svd_upper
from jbdlab.config import settings
from jbdlab.dense import as_vector
from jbdlab.errors import DimensionMismatchError, InsufficientStepsError
from jbdlab.inner import LsqrConfig, ProjectionMode, StackedOperator, project
from jbdlab.sparse import SparseMatrix, matvec, matvec_transposed

if TYPE_CHECKING:
    from jbdlab.core import JbdState

logger = logging.getLogger(__name__)


class Which(str, Enum):
    """Which end of the generalized singular spectrum is wanted."""

    LARGEST = "largest"
    SMALLEST = "smallest"

    def flipped(self) -> "Which":
        return Which.SMALLEST if self is Which.LARGEST else Which.LARGEST


class StoppingRule(BaseModel):
    """Stop once `target_count` extreme pairs have residual bounds below `tolerance`."""

    model_config = ConfigDict(frozen=True)

    target_count: int = Field(default=1, ge=1)
    which: Which = Which.LARGEST
    tolerance: float = Field(default=1e-10, gt=0.0)
    norm_estimate: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="||R||; estimated by Lanczos bidiagonalization when omitted",
    )


@dataclass
class RitzApproximation:
    """One approximate generalized singular pair and what was recovered for it."""

    index: int
    c: float
    s: float
    source: str
    w: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    p_hat: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    residual_bound: Optional[float] = None
    residual_direct: Optional[float] = None

    @property
    def gsv(self) -> float:
        """c / s, infinite for the pair {1, 0}."""
        return np.inf if self.s == 0.0 else self.c / self.s

    def summary(self) -> dict:
        return {
            "index": self.index,
            "c": self.c,
            "s": self.s,
            "gsv": self.gsv,
            "source": self.source,
            "residual_bound": self.residual_bound,
            "residual_direct": self.residual_direct,
        }


def _cs_pair(value: float) -> Tuple[float, float]:
    """Complete a value in [0, 1] to a pair on the unit circle."""
    value = float(min(max(value, 0.0), 1.0))
    return value, float(np.sqrt((1.0 - value) * (1.0 + value)))


def _select(order: int, count: int, descending_first: bool) -> List[int]:
    if descending_first:
        return list(range(count))
    return [order - 1 - j for j in range(count)]


def _check_count(state: "JbdState", count: int) -> None:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > state.k:
        raise InsufficientStepsError(
            f"requested {count} Ritz pairs but only {state.k} steps were taken"
        )


def extract_ritz_from_lower(
    state: "JbdState",
    count: int,
    which: Which = Which.LARGEST,
    norm_estimate: Optional[float] = None,
    svd: Optional[BidiagonalSvd] = None,
) -> List[RitzApproximation]:
    """
    Ritz pairs from the SVD of B_k.

    For each selected singular value c_i of B_k the pair is {c_i, sqrt(1 - c_i^2)},
    and the singular vectors w_i, p_i are kept for vector recovery. For a
    swapped run the labels are exchanged so the pairs refer to the original
    {A, L}.

    Args:
        state: Joint bidiagonalization state after k steps
        count: Number of pairs, at most k
        which: End of the spectrum (of the original pair)
        norm_estimate: ||R|| for residual bounds; defaults to the state's estimate
        svd: Precomputed SVD of B_k

    Raises:
        InsufficientStepsError: If count exceeds k
    """
    _check_count(state, count)
    svd = svd or svd_lower(state.lower)
    norm_estimate = norm_estimate if norm_estimate is not None else state.norm_estimate
    effective = which.flipped() if state.swapped else which

    pairs = []
    for rank, j in enumerate(_select(svd.order, count, effective is Which.LARGEST), start=1):
        c, s = _cs_pair(svd.values[j])
        if state.swapped:
            c, s = s, c
        w = svd.right[:, j].copy()
        pairs.append(
            RitzApproximation(
                index=rank,
                c=c,
                s=s,
                source="lower",
                w=w,
                p=svd.left[:, j].copy(),
                residual_bound=residual_bound(state, float(w[-1]), norm_estimate),
            )
        )
    return pairs


def extract_ritz_from_upper(
    state: "JbdState",
    count: int,
    which: Which = Which.LARGEST,
    svd: Optional[BidiagonalSvd] = None,
) -> List[RitzApproximation]:
    """
    Ritz pairs from the SVD of B_hat_k.

    The singular values approximate the s-values and are consumed in
    ascending order, so the largest generalized values come from the
    smallest singular values of B_hat_k.

    Raises:
        InsufficientStepsError: If count exceeds k
    """
    _check_count(state, count)
    svd = svd or svd_upper(state.upper)
    effective = which.flipped() if state.swapped else which

    pairs = []
    for rank, j in enumerate(_select(svd.order, count, effective is Which.SMALLEST), start=1):
        s, c = _cs_pair(svd.values[j])
        if state.swapped:
            c, s = s, c
        pairs.append(
            RitzApproximation(
                index=rank,
                c=c,
                s=s,
                source="upper",
                w=svd.right[:, j].copy(),
                p_hat=svd.left[:, j].copy(),
            )
        )
    return pairs


def recover_right_vector(
    op: StackedOperator,
    state: "JbdState",
    w: np.ndarray,
    cfg: Optional[LsqrConfig] = None,
    mode: Optional[ProjectionMode] = None,
) -> np.ndarray:
    """
    Right vector x minimizing ||Z x - V_tilde_k w||.

    Raises:
        DimensionMismatchError: If w does not have length k
        NotConvergedError: From the inner solver
    """
    w = as_vector(w, "w")
    if w.shape[0] != state.k:
        raise DimensionMismatchError(f"w has length {w.shape[0]}, expected k = {state.k}")
    _, x = project(op, state.V_tilde @ w, cfg or state.lsqr, mode or state.mode)
    return x


def recover_left_vectors(
    state: "JbdState",
    p: np.ndarray,
    p_hat: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Left vectors y = U_{k+1} p and, when p_hat is given, z = U_hat_k p_hat.

    Raises:
        DimensionMismatchError: On wrong vector lengths
    """
    p = as_vector(p, "p")
    if p.shape[0] != state.k + 1:
        raise DimensionMismatchError(f"p has length {p.shape[0]}, expected k + 1 = {state.k + 1}")
    y = state.U @ p

    z = None
    if p_hat is not None:
        p_hat = as_vector(p_hat, "p_hat")
        if p_hat.shape[0] != state.k:
            raise DimensionMismatchError(
                f"p_hat has length {p_hat.shape[0]}, expected k = {state.k}"
            )
        z = state.U_hat @ p_hat
    return y, z


def residual_bound(state: "JbdState", w_last_component: float, norm_R: float) -> float:
    """Computable residual bound ||R|| alpha_{k+1} beta_{k+1} |e_k^T w|."""
    if norm_R <= 0.0:
        raise ValueError(f"norm_R must be positive, got {norm_R}")
    return float(norm_R * state.next_alpha * state.next_beta * abs(w_last_component))


def residual_direct(A: SparseMatrix, L: SparseMatrix, ritz: RitzApproximation) -> float:
    """Exact residual ||(s^2 A^T A - c^2 L^T L) x|| by sparse products."""
    if ritz.x is None:
        raise ValueError("residual_direct needs a recovered right vector x")
    x = ritz.x
    residual = (
        ritz.s**2 * matvec_transposed(A, matvec(A, x))
        - ritz.c**2 * matvec_transposed(L, matvec(L, x))
    )
    return float(np.linalg.norm(residual))


def angle_error(c_approx: float, s_approx: float, c_true: float, s_true: float) -> float:
    """Sine of the angle between two pairs on the unit circle."""
    return abs(s_approx * c_true - s_true * c_approx)


def relative_error(c_approx: float, s_approx: float, c_true: float, s_true: float) -> float:
    """Relative error of the quotient c/s; NaN when the true quotient is 0 or infinite."""
    if s_true == 0.0 or c_true == 0.0:
        return float("nan")
    true_value = c_true / s_true
    approx_value = np.inf if s_approx == 0.0 else c_approx / s_approx
    return float(abs(approx_value - true_value) / true_value)


def approximate_gsvd(
    state: "JbdState",
    count: int,
    which: Which = Which.LARGEST,
    cfg: Optional[LsqrConfig] = None,
    with_vectors: bool = True,
    with_z: bool = False,
) -> List[RitzApproximation]:
    """
    Extreme approximate GSVD components of the original pair.

    Pairs come from B_k. With vectors on, x is recovered by a least squares
    solve, the left vector of the driving matrix from U_{k+1}, and the left
    vector of the other matrix from the rank-matched pair of B_hat_k. Direct
    residuals are evaluated against the original {A, L}.
    """
    pairs = extract_ritz_from_lower(state, count, which)
    if not with_vectors:
        return pairs

    op = state.op
    A, L = (op.L, op.A) if state.swapped else (op.A, op.L)
    needs_upper = with_z or state.swapped
    uppers = extract_ritz_from_upper(state, count, which) if needs_upper else [None] * len(pairs)

    for pair, upper in zip(pairs, uppers):
        pair.x = recover_right_vector(op, state, pair.w, cfg)
        first, second = recover_left_vectors(state, pair.p, upper.p_hat if upper else None)
        if upper is not None:
            pair.p_hat = upper.p_hat
        if state.swapped:
            pair.y, pair.z = second, first
        else:
            pair.y, pair.z = first, second
        pair.residual_direct = residual_direct(A, L, pair)
        logger.debug(
            f"Pair {pair.index}: c={pair.c:.16e} s={pair.s:.16e} "
            f"bound={pair.residual_bound:.3e} direct={pair.residual_direct:.3e}"
        )
    return pairs


def count_near(values: np.ndarray, target: float, radius: Optional[float] = None) -> int:
    """Number of values within `radius` of `target`."""
    radius = settings.ghost_radius if radius is None else radius
    return int(np.count_nonzero(np.abs(np.asarray(values) - target) <= radius))


def ritz_clusters(values: np.ndarray, radius: Optional[float] = None) -> List[np.ndarray]:
    """
    Group sorted values whose neighbours lie within `radius`.

    A cluster with more members than the multiplicity of the value it
    approximates contains spurious copies.
    """
    radius = settings.ghost_radius if radius is None else radius
    ordered = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    if ordered.size == 0:
        return []
    breaks = np.flatnonzero(np.abs(np.diff(ordered)) > radius) + 1
    return np.split(ordered, breaks)
