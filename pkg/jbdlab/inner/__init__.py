"""
Inner least squares solver and stacked-operator utilities

Applies the orthogonal projector onto range(Z), Z = (A; L), either
exactly through a cached dense Householder factor (reference mode) or by
LSQR (iterative mode). Also hosts plain Lanczos bidiagonalization, used to
estimate ||Z|| and the conditioning of A and L.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse.linalg import LinearOperator, lsqr

from jbdlab.bidiag import LowerBidiagonal, singular_values
from jbdlab.config import EPS, settings
from jbdlab.dense import GrowingBasis, as_vector, householder_qr, project_out
from jbdlab.errors import (
    BreakdownError,
    DimensionMismatchError,
    MissingCacheError,
    NotConvergedError,
    ZeroStartError,
)
from jbdlab.sparse import SparseMatrix, stack

logger = logging.getLogger(__name__)

LSQR_ITERATION_LIMIT = 7


class ProjectionMode(str, Enum):
    """How the projector QQ^T is applied."""

    REFERENCE = "reference"
    ITERATIVE = "iterative"


class LsqrConfig(BaseModel):
    """Stopping parameters of the LSQR inner solver."""

    model_config = ConfigDict(frozen=True)

    atol: float = Field(default_factory=lambda: settings.lsqr_atol, gt=0.0, lt=1.0)
    btol: float = Field(default_factory=lambda: settings.lsqr_btol, gt=0.0, lt=1.0)
    max_iterations: int = Field(default_factory=lambda: settings.lsqr_max_iterations, ge=1)


@dataclass(frozen=True)
class StackedOperator:
    """
    The pair {A, L} stacked as Z = (A; L).

    `q` and `r` hold the compact Householder factors of the dense Z once
    `with_reference_cache` has been called.
    """

    A: SparseMatrix
    L: SparseMatrix
    q: Optional[np.ndarray] = field(default=None, repr=False)
    r: Optional[np.ndarray] = field(default=None, repr=False)
    stacked: SparseMatrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.A.cols != self.L.cols:
            raise DimensionMismatchError(
                f"A is {self.A.rows}x{self.A.cols} but L is {self.L.rows}x{self.L.cols}; "
                "column counts must match"
            )
        object.__setattr__(self, "stacked", stack(self.A, self.L))

    @property
    def m(self) -> int:
        return self.A.rows

    @property
    def p(self) -> int:
        return self.L.rows

    @property
    def n(self) -> int:
        return self.A.cols

    @property
    def has_cache(self) -> bool:
        return self.q is not None

    @property
    def q_a(self) -> np.ndarray:
        self._require_cache()
        return self.q[: self.m]

    @property
    def q_l(self) -> np.ndarray:
        self._require_cache()
        return self.q[self.m :]

    def _require_cache(self) -> None:
        if self.q is None:
            raise MissingCacheError(
                "reference mode needs the dense Q factor; build the operator "
                "with with_reference_cache()"
            )

    def default_mode(self) -> ProjectionMode:
        if self.n <= settings.reference_max_columns:
            return ProjectionMode.REFERENCE
        return ProjectionMode.ITERATIVE

    def with_reference_cache(self) -> "StackedOperator":
        """
        Return a copy carrying the dense Householder factors of Z.

        Raises:
            RankDeficientError: If Z does not have full column rank
        """
        if self.has_cache:
            return self
        logger.info(f"Factoring dense stacked matrix {self.m + self.p}x{self.n}")
        q, r = householder_qr(self.stacked.to_dense())

        defect = np.linalg.norm(q.T @ q - np.eye(self.n), "fro")
        if defect > 50 * EPS * self.n:
            logger.warning(
                f"Cached Q has orthogonality defect {defect:.3e} "
                f"(expected <= {50 * EPS * self.n:.3e})"
            )
        return StackedOperator(self.A, self.L, q=q, r=r)

    def swapped(self) -> "StackedOperator":
        """The same operator with A and L exchanged; the cache is not carried over."""
        return StackedOperator(self.L, self.A)


def project(
    op: StackedOperator,
    u_padded: np.ndarray,
    cfg: Optional[LsqrConfig] = None,
    mode: Optional[ProjectionMode] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project a vector onto range(Z) through the least squares problem min ||Z x - u||.

    Args:
        op: Stacked operator
        u_padded: Vector of length m + p
        cfg: LSQR parameters (iterative mode)
        mode: Projection path; defaults to the operator's default

    Returns:
        Tuple of (projected, x_tilde) with projected = Z x_tilde

    Raises:
        DimensionMismatchError: If u_padded has the wrong length
        MissingCacheError: Reference mode without cached factors
        NotConvergedError: LSQR hit its iteration limit
    """
    u_padded = as_vector(u_padded, "u_padded")
    if u_padded.shape[0] != op.m + op.p:
        raise DimensionMismatchError(
            f"u_padded has length {u_padded.shape[0]}, expected m + p = {op.m + op.p}"
        )
    mode = ProjectionMode(mode) if mode is not None else op.default_mode()

    if mode is ProjectionMode.REFERENCE:
        op._require_cache()
        coefficients = op.q.T @ u_padded
        projected = op.q @ coefficients
        x_tilde = scipy.linalg.solve_triangular(op.r, coefficients, check_finite=False)
        return projected, x_tilde

    cfg = cfg or LsqrConfig()
    x_tilde, istop, iterations = lsqr(
        op.stacked.csr,
        u_padded,
        atol=cfg.atol,
        btol=cfg.btol,
        conlim=0.0,
        iter_lim=cfg.max_iterations,
    )[:3]
    if istop == LSQR_ITERATION_LIMIT:
        logger.error(f"LSQR stopped after {iterations} iterations without meeting tolerances")
        raise NotConvergedError(
            f"LSQR did not converge within {cfg.max_iterations} iterations "
            f"(atol={cfg.atol:.1e}, btol={cfg.btol:.1e})"
        )
    logger.debug(f"LSQR converged in {iterations} iterations (istop={istop})")
    return op.stacked.csr @ x_tilde, x_tilde


@dataclass
class LanczosBidiagState:
    """
    Mutable state of a Lanczos bidiagonalization M V_k = U_{k+1} B_k.

    `beta[0]` is the norm of the starting vector. The state is confined to
    one worker.
    """

    u: GrowingBasis
    v: GrowingBasis
    alpha: List[float]
    beta: List[float]
    reorthogonalize: bool = True
    norm_estimate: float = 0.0
    terminated: bool = False

    @property
    def steps(self) -> int:
        return len(self.beta) - 1

    def lower(self) -> LowerBidiagonal:
        k = self.steps
        return LowerBidiagonal(self.alpha[:k], self.beta[: k + 1])

    def breakdown_tolerance(self) -> float:
        return (self.u.dim + self.v.dim) * EPS * self.norm_estimate

    def _record(self, value: float) -> None:
        self.norm_estimate = max(self.norm_estimate, value)


def lanczos_bidiag_init(
    applier: LinearOperator,
    b: np.ndarray,
    reorthogonalize: bool = True,
) -> LanczosBidiagState:
    """
    Start a Lanczos bidiagonalization: beta_1 u_1 = b, alpha_1 v_1 = M^T u_1.

    Raises:
        ZeroStartError: If b is zero
        BreakdownError: If alpha_1 vanishes
    """
    b = as_vector(b, "b")
    rows, cols = applier.shape
    if b.shape[0] != rows:
        raise DimensionMismatchError(f"start vector has length {b.shape[0]}, expected {rows}")
    beta_1 = float(np.linalg.norm(b))
    if beta_1 == 0.0:
        raise ZeroStartError("Lanczos bidiagonalization needs a nonzero starting vector")

    state = LanczosBidiagState(
        u=GrowingBasis(rows),
        v=GrowingBasis(cols),
        alpha=[],
        beta=[beta_1],
        reorthogonalize=reorthogonalize,
    )
    state.u.append(b / beta_1)

    r = applier.rmatvec(state.u.column(0))
    alpha_1 = float(np.linalg.norm(r))
    state.alpha.append(alpha_1)
    state._record(alpha_1)
    if alpha_1 == 0.0:
        state.terminated = True
        raise BreakdownError("alpha_1 vanished: start vector lies in null(M^T)", "alpha", 0.0, state)
    state.v.append(r / alpha_1)
    return state


def lanczos_bidiag_step(state: LanczosBidiagState, applier: LinearOperator) -> LanczosBidiagState:
    """
    One Lanczos bidiagonalization step.

    p = M v_i - alpha_i u_i, beta_{i+1} = ||p||; r = M^T u_{i+1} - beta_{i+1} v_i,
    alpha_{i+1} = ||r||. With reorthogonalization on, p and r are orthogonalized
    against all previous vectors by two MGS passes before normalization.

    Raises:
        BreakdownError: If beta_{i+1} or alpha_{i+1} falls below tolerance; the
            coefficient is still recorded so the bidiagonal matrix is usable
    """
    if state.terminated:
        raise RuntimeError("Lanczos bidiagonalization already terminated")

    u_i = state.u.column(-1)
    v_i = state.v.column(-1)

    p = applier.matvec(v_i) - state.alpha[-1] * u_i
    if state.reorthogonalize:
        p = project_out(p, state.u.matrix)
    beta_next = float(np.linalg.norm(p))
    state.beta.append(beta_next)
    state._record(beta_next)
    if beta_next < state.breakdown_tolerance():
        state.terminated = True
        raise BreakdownError(
            f"beta_{state.steps + 1} = {beta_next:.3e} below breakdown tolerance",
            "beta", beta_next, state,
        )
    state.u.append(p / beta_next)

    r = applier.rmatvec(state.u.column(-1)) - beta_next * v_i
    if state.reorthogonalize:
        r = project_out(r, state.v.matrix)
    alpha_next = float(np.linalg.norm(r))
    state.alpha.append(alpha_next)
    state._record(alpha_next)
    if alpha_next < state.breakdown_tolerance():
        state.terminated = True
        raise BreakdownError(
            f"alpha_{state.steps + 1} = {alpha_next:.3e} below breakdown tolerance",
            "alpha", alpha_next, state,
        )
    state.v.append(r / alpha_next)
    return state


def lanczos_extreme_singular_values(
    applier: LinearOperator,
    b: np.ndarray,
    iterations: int,
) -> Tuple[float, float]:
    """
    Largest and smallest singular values of B_k after up to `iterations` steps.

    The largest is a lower bound on ||M||; the smallest is only a rough
    estimate of sigma_min(M) after a short run.
    """
    try:
        state = lanczos_bidiag_init(applier, b)
    except BreakdownError:
        return 0.0, 0.0
    for _ in range(iterations):
        try:
            lanczos_bidiag_step(state, applier)
        except BreakdownError:
            break
    values = singular_values(state.lower())
    return float(values[0]), float(values[-1])


def estimate_stacked_norm(op: StackedOperator, iterations: Optional[int] = None) -> float:
    """
    Estimate ||Z|| = ||R|| by Lanczos bidiagonalization of Z with an all-ones start.

    The estimate is the running maximum of sigma_1(B_k), so it never
    decreases with more iterations. Breakdown returns the current estimate.
    """
    if iterations is None:
        iterations = settings.norm_estimate_iterations
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    applier = op.stacked.as_operator()
    try:
        state = lanczos_bidiag_init(applier, np.ones(op.m + op.p))
    except BreakdownError:
        return 0.0

    estimate = state.alpha[0]
    for _ in range(iterations):
        try:
            lanczos_bidiag_step(state, applier)
        except BreakdownError:
            estimate = max(estimate, float(singular_values(state.lower())[0]))
            logger.debug(f"Norm estimation broke down after {state.steps} steps")
            break
        estimate = max(estimate, float(singular_values(state.lower())[0]))

    logger.debug(f"Estimated ||Z|| = {estimate:.16e} after {state.steps} steps")
    return estimate
