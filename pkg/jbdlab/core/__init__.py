"""
Joint bidiagonalization of a matrix pair {A, L}

Runs the coupled recurrence that produces the lower bidiagonal B_k, the
upper bidiagonal B_hat_k and the bases U_{k+1}, V_tilde_k and U_hat_k, with
a choice of reorthogonalization strategies, lucky-breakdown handling and
the driver loop with residual-bound stopping.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from jbdlab.bidiag import (
    LowerBidiagonal,
    UpperBidiagonal,
    check_interlacing,
    coupling_coefficient,
    inverse_norm,
    singular_values,
    svd_lower,
)
from jbdlab.config import EPS, settings
from jbdlab.dense import GrowingBasis, as_vector, mgs_orthogonalize, project_out
from jbdlab.errors import (
    BreakdownError,
    BreakdownToZeroError,
    DimensionMismatchError,
    NumericalError,
    ZeroStartError,
)
from jbdlab.extract import RitzApproximation, StoppingRule, Which, extract_ritz_from_lower
from jbdlab.inner import (
    LsqrConfig,
    ProjectionMode,
    StackedOperator,
    estimate_stacked_norm,
    lanczos_extreme_singular_values,
    project,
)
from jbdlab.sparse import SparseMatrix

logger = logging.getLogger(__name__)


class ReorthKind(str, Enum):
    NONE = "none"
    FULL = "full"
    ONE_SIDED = "one-sided"
    SEMI = "semi"


class PairOrder(str, Enum):
    """How maybe_swap_pair orders {A, L}."""

    AUTO = "auto"
    KEEP = "keep"
    SWAP = "swap"


class ReorthStrategy(BaseModel):
    """
    Reorthogonalization strategy of the recurrence.

    `full` orthogonalizes every new u, v_tilde and u_hat against its whole
    basis by two MGS passes. `one-sided` only treats v_tilde. `semi`
    measures the level of each new u and v_tilde column and reorthogonalizes
    it only when the level exceeds sqrt(delta / denominator), with
    delta = ||inv(B_lower_k)|| * eps; u_hat is never touched.
    """

    model_config = ConfigDict(frozen=True)

    kind: ReorthKind = ReorthKind.FULL
    semi_denominator: Literal["2k+1", "k"] = Field(
        default_factory=lambda: settings.semi_denominator,
        description="Denominator of the semiorthogonality bar",
    )

    def threshold(self, k: int, inv_norm_lower: float) -> float:
        """Semiorthogonality bar after k steps, clipped to 1."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        denominator = 2 * k + 1 if self.semi_denominator == "2k+1" else k
        delta = inv_norm_lower * EPS
        return float(min(np.sqrt(delta / denominator), 1.0))

    @property
    def reorth_u(self) -> bool:
        return self.kind is ReorthKind.FULL

    @property
    def reorth_v(self) -> bool:
        return self.kind in (ReorthKind.FULL, ReorthKind.ONE_SIDED)

    @property
    def reorth_uhat(self) -> bool:
        return self.kind is ReorthKind.FULL


@dataclass
class StepRecord:
    """What one recurrence step decided about reorthogonalization."""

    k: int
    semi_bar: Optional[float] = None
    xi_u: Optional[float] = None
    xi_v: Optional[float] = None
    reorth_u: bool = False
    reorth_v: bool = False
    reorth_uhat: bool = False
    # semi only: whole-basis levels after the step and columns re-swept to reach them
    basis_xi_u: Optional[float] = None
    basis_xi_v: Optional[float] = None
    swept_u: int = 0
    swept_v: int = 0
    # |measured beta_hat_i - alpha_{i+1} beta_{i+1} / alpha_hat_i|
    coupling_gap: Optional[float] = None


@dataclass
class JbdState:
    """
    Mutable joint bidiagonalization state after k steps.

    Coefficient lists are 1-based in the usual notation: `beta[0]` is
    beta_1 = ||b||, `beta_hat[0]` is beta_hat_1. After k steps the lists
    hold at least alpha_1..alpha_k, beta_1..beta_{k+1}, alpha_hat_1..alpha_hat_k
    and beta_hat_1..beta_hat_{k-1}; alpha_{k+1} and beta_hat_k are present
    unless the run broke down before computing them. The state is confined
    to one worker.
    """

    op: StackedOperator
    strategy: ReorthStrategy
    lsqr: LsqrConfig
    mode: ProjectionMode
    norm_estimate: float
    tau: float
    u: GrowingBasis
    v_tilde: GrowingBasis
    u_hat: GrowingBasis
    alpha: List[float] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    alpha_hat: List[float] = field(default_factory=list)
    beta_hat: List[float] = field(default_factory=list)
    k: int = 0
    swapped: bool = False
    terminated: bool = False
    termination_reason: Optional[str] = None
    records: List[StepRecord] = field(default_factory=list)
    # per column: largest |cosine| against the earlier columns (semi only)
    u_levels: List[float] = field(default_factory=list)
    v_levels: List[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.op.m

    @property
    def p(self) -> int:
        return self.op.p

    @property
    def lower(self) -> LowerBidiagonal:
        return LowerBidiagonal(self.alpha[: self.k], self.beta[: self.k + 1])

    @property
    def upper(self) -> UpperBidiagonal:
        return UpperBidiagonal(self.alpha_hat[: self.k], self.beta_hat[: max(self.k - 1, 0)])

    @property
    def leading_lower(self) -> UpperBidiagonal:
        """The k x k matrix B_lower_k whose inverse norm drives the error bounds."""
        return UpperBidiagonal(self.alpha[: self.k], self.beta[1 : self.k])

    @property
    def next_alpha(self) -> float:
        return self.alpha[self.k] if len(self.alpha) > self.k else 0.0

    @property
    def next_beta(self) -> float:
        return self.beta[self.k] if len(self.beta) > self.k else 0.0

    @property
    def next_beta_hat(self) -> float:
        """beta_hat_k, zero when the run broke down before it was formed."""
        return self.beta_hat[self.k - 1] if len(self.beta_hat) >= self.k >= 1 else 0.0

    @property
    def U(self) -> np.ndarray:
        """U_{k+1}; a missing last column after a beta breakdown reads as zero."""
        stored = self.u.matrix[:, : self.k + 1]
        if stored.shape[1] == self.k + 1:
            return stored
        padded = np.zeros((self.m, self.k + 1), order="F")
        padded[:, : stored.shape[1]] = stored
        return padded

    @property
    def stored_U(self) -> np.ndarray:
        """The actually computed columns of U_{k+1}."""
        return self.u.matrix[:, : self.k + 1]

    @property
    def V_tilde(self) -> np.ndarray:
        return self.v_tilde.matrix[:, : self.k]

    @property
    def U_hat(self) -> np.ndarray:
        return self.u_hat.matrix[:, : self.k]

    @property
    def next_v_tilde(self) -> np.ndarray:
        if len(self.v_tilde) > self.k:
            return self.v_tilde.column(self.k)
        return np.zeros(self.m + self.p)

    @property
    def next_u_hat(self) -> np.ndarray:
        if len(self.u_hat) > self.k:
            return self.u_hat.column(self.k)
        return np.zeros(self.p)

    def snapshot(self) -> "JbdState":
        """Independent copy; extraction and diagnostics may run on it concurrently."""
        return JbdState(
            op=self.op,
            strategy=self.strategy,
            lsqr=self.lsqr,
            mode=self.mode,
            norm_estimate=self.norm_estimate,
            tau=self.tau,
            u=self.u.copy(),
            v_tilde=self.v_tilde.copy(),
            u_hat=self.u_hat.copy(),
            alpha=list(self.alpha),
            beta=list(self.beta),
            alpha_hat=list(self.alpha_hat),
            beta_hat=list(self.beta_hat),
            k=self.k,
            swapped=self.swapped,
            terminated=self.terminated,
            termination_reason=self.termination_reason,
            records=list(self.records),
            u_levels=list(self.u_levels),
            v_levels=list(self.v_levels),
        )

    def _break_down(self, coefficient: str, value: float, detail: Optional[str] = None) -> None:
        detail = detail or f"below breakdown tolerance {self.tau:.3e}"
        self.terminated = True
        self.termination_reason = "breakdown"
        logger.info(
            f"Breakdown at k={self.k}: {coefficient} = {value:.3e} {detail}; "
            "invariant subspace found"
        )
        raise BreakdownError(
            f"{coefficient} = {value:.3e} {detail}",
            coefficient=coefficient,
            value=value,
            state=self,
        )


def _level(vector: np.ndarray, basis: np.ndarray) -> float:
    """Largest |cosine| between a vector and the columns of a basis."""
    norm = float(np.linalg.norm(vector))
    if basis.shape[1] == 0 or norm == 0.0:
        return 0.0
    return float(np.max(np.abs(basis.T @ vector))) / norm


def _reorthogonalize(vector: np.ndarray, basis: np.ndarray, tau: float) -> np.ndarray:
    """Two MGS passes against the basis; a remainder below tau comes back as zero."""
    try:
        return mgs_orthogonalize(vector, basis, passes=2, tol=tau)
    except BreakdownToZeroError as e:
        logger.debug(f"Reorthogonalization left norm {e.remaining:.3e} (tau = {tau:.3e})")
        return np.zeros_like(vector)


def _resweep(basis: GrowingBasis, bar: float) -> Tuple[List[float], int]:
    """
    Bring every column of the basis to level <= bar.

    Columns are visited in order; one whose level against the (already
    treated) earlier columns exceeds the bar is orthogonalized against them
    and renormalized.

    Returns:
        Tuple of (per-column levels after the sweep, number of columns changed)
    """
    levels = [0.0]
    swept = 0
    for j in range(1, len(basis)):
        earlier = basis.matrix[:, :j]
        column = basis.column(j)
        level = _level(column, earlier)
        if level > bar:
            column = project_out(column, earlier)
            basis.replace(j, column / np.linalg.norm(column))
            level = _level(basis.column(j), earlier)
            swept += 1
        levels.append(level)
    return levels, swept


def _track_level(basis: GrowingBasis, levels: List[float], bar: float) -> Tuple[List[float], int]:
    """Add the level of the newest column and re-sweep when the basis exceeds the bar."""
    levels.append(_level(basis.column(-1), basis.matrix[:, :-1]))
    if max(levels) > bar:
        return _resweep(basis, bar)
    return levels, 0


def jbd_init(
    op: StackedOperator,
    b: np.ndarray,
    strategy: Optional[ReorthStrategy] = None,
    cfg: Optional[LsqrConfig] = None,
    mode: Optional[ProjectionMode] = None,
    norm_estimate: Optional[float] = None,
    swapped: bool = False,
) -> JbdState:
    """
    Start the joint bidiagonalization from b.

    beta_1 u_1 = b; alpha_1 v_tilde_1 = QQ^T (u_1; 0); alpha_hat_1 u_hat_1 =
    v_tilde_1(m+1:m+p). Reference mode builds the dense Householder cache of Z
    if the operator does not carry one yet.

    Args:
        op: Stacked operator for {A, L}
        b: Starting vector of length m
        strategy: Reorthogonalization strategy (full by default)
        cfg: LSQR parameters for iterative projections
        mode: Projection path; defaults to the operator's default
        norm_estimate: ||Z||; estimated by Lanczos bidiagonalization when omitted
        swapped: Whether op holds the pair in exchanged order

    Returns:
        JbdState at k = 0

    Raises:
        ZeroStartError: If b is zero
        BreakdownError: If alpha_1 or alpha_hat_1 falls below tolerance
    """
    b = as_vector(b, "b")
    if b.shape[0] != op.m:
        raise DimensionMismatchError(f"b has length {b.shape[0]}, expected m = {op.m}")
    beta_1 = float(np.linalg.norm(b))
    if beta_1 == 0.0:
        raise ZeroStartError("joint bidiagonalization needs a nonzero starting vector")

    strategy = strategy or ReorthStrategy()
    cfg = cfg or LsqrConfig()
    mode = ProjectionMode(mode) if mode is not None else op.default_mode()
    if mode is ProjectionMode.REFERENCE:
        op = op.with_reference_cache()
    if norm_estimate is None:
        norm_estimate = estimate_stacked_norm(op)
    tau = (op.m + op.p) * EPS * norm_estimate

    state = JbdState(
        op=op,
        strategy=strategy,
        lsqr=cfg,
        mode=mode,
        norm_estimate=norm_estimate,
        tau=tau,
        u=GrowingBasis(op.m),
        v_tilde=GrowingBasis(op.m + op.p),
        u_hat=GrowingBasis(op.p),
        swapped=swapped,
    )
    logger.info(
        f"Starting JBD: m={op.m}, p={op.p}, n={op.n}, strategy={strategy.kind.value}, "
        f"mode={mode.value}, ||Z||~{norm_estimate:.6e}, swapped={swapped}"
    )

    state.beta.append(beta_1)
    u_1 = b / beta_1
    state.u.append(u_1)

    projected, _ = project(op, np.concatenate([u_1, np.zeros(op.p)]), cfg, mode)
    alpha_1 = float(np.linalg.norm(projected))
    state.alpha.append(alpha_1)
    if alpha_1 < tau:
        state._break_down("alpha_1", alpha_1)
    v_tilde_1 = projected / alpha_1
    state.v_tilde.append(v_tilde_1)

    head = v_tilde_1[op.m :]
    alpha_hat_1 = float(np.linalg.norm(head))
    state.alpha_hat.append(alpha_hat_1)
    if alpha_hat_1 < tau:
        state._break_down("alpha_hat_1", alpha_hat_1)
    state.u_hat.append(head / alpha_hat_1)
    if strategy.kind is ReorthKind.SEMI:
        state.u_levels.append(0.0)
        state.v_levels.append(0.0)
    return state


def jbd_step(state: JbdState) -> JbdState:
    """
    Advance the recurrence by one step, k -> k + 1.

    beta_{i+1} u_{i+1} = v_tilde_i(1:m) - alpha_i u_i;
    alpha_{i+1} v_tilde_{i+1} = QQ^T (u_{i+1}; 0) - beta_{i+1} v_tilde_i;
    alpha_hat_{i+1} u_hat_{i+1} = (-1)^i v_tilde_{i+1}(m+1:m+p) - beta_hat_i u_hat_i.

    beta_hat_i is the component of (-1)^i v_tilde_{i+1}(m+1:m+p) along
    u_hat_i. It equals alpha_{i+1} beta_{i+1} / alpha_hat_i in exact
    arithmetic; the difference is kept in the step record as `coupling_gap`.
    Reorthogonalization is applied before each normalization. Step n is the
    last one: range(Z) holds no direction for v_tilde_{n+1}.

    Raises:
        RuntimeError: If the state is already terminated
        BreakdownError: If a new coefficient falls below tolerance or k
            reaches n; the state is attached, marked terminated and advanced
            to the new k
        NotConvergedError: From the inner solver
    """
    if state.terminated:
        raise RuntimeError(f"JBD state already terminated ({state.termination_reason})")

    i = state.k + 1
    m = state.m
    strategy = state.strategy
    record = StepRecord(k=i)
    semi = strategy.kind is ReorthKind.SEMI
    if semi:
        record.semi_bar = strategy.threshold(
            i, inverse_norm(UpperBidiagonal(state.alpha[:i], state.beta[1:i]))
        )

    def break_down(coefficient: str, value: float, detail: Optional[str] = None) -> None:
        state.k = i
        state.records.append(record)
        state._break_down(coefficient, value, detail)

    u_i = state.u.column(i - 1)
    v_i = state.v_tilde.column(i - 1)

    # beta_{i+1} u_{i+1}
    w = v_i[:m] - state.alpha[i - 1] * u_i
    if semi:
        record.xi_u = _level(w, state.u.matrix)
        record.reorth_u = record.xi_u > record.semi_bar
    else:
        record.reorth_u = strategy.reorth_u
    if record.reorth_u:
        w = _reorthogonalize(w, state.u.matrix, state.tau)
    beta_next = float(np.linalg.norm(w))
    state.beta.append(beta_next)
    if beta_next < state.tau:
        break_down(f"beta_{i + 1}", beta_next)
    state.u.append(w / beta_next)
    if semi:
        state.u_levels, record.swept_u = _track_level(state.u, state.u_levels, record.semi_bar)
        record.basis_xi_u = max(state.u_levels)
    u_next = state.u.column(i)

    if i == state.op.n:
        state.alpha.append(0.0)
        break_down(f"alpha_{i + 1}", 0.0, detail=f"(range(Z) exhausted at k = n = {i})")

    # alpha_{i+1} v_tilde_{i+1}
    projected, _ = project(
        state.op, np.concatenate([u_next, np.zeros(state.p)]), state.lsqr, state.mode
    )
    t = projected - beta_next * v_i
    if semi:
        record.xi_v = _level(t, state.v_tilde.matrix)
        record.reorth_v = record.xi_v > record.semi_bar
    else:
        record.reorth_v = strategy.reorth_v
    if record.reorth_v:
        t = _reorthogonalize(t, state.v_tilde.matrix, state.tau)
    alpha_next = float(np.linalg.norm(t))
    state.alpha.append(alpha_next)
    if alpha_next < state.tau:
        break_down(f"alpha_{i + 1}", alpha_next)
    state.v_tilde.append(t / alpha_next)
    if semi:
        state.v_levels, record.swept_v = _track_level(state.v_tilde, state.v_levels, record.semi_bar)
        record.basis_xi_v = max(state.v_levels)
    v_next = state.v_tilde.column(i)

    # beta_hat_i couples the two bidiagonal factors
    lower_part = (-1.0 if i % 2 else 1.0) * v_next[m:]
    u_hat_i = state.u_hat.column(i - 1)
    beta_hat = float(u_hat_i @ lower_part)
    coupled = coupling_coefficient(alpha_next, beta_next, state.alpha_hat[i - 1], tol=0.0)
    record.coupling_gap = abs(beta_hat - coupled)
    state.beta_hat.append(max(beta_hat, 0.0))
    if beta_hat < state.tau:
        break_down(f"beta_hat_{i}", beta_hat)

    h = lower_part - beta_hat * u_hat_i
    record.reorth_uhat = strategy.reorth_uhat
    if record.reorth_uhat:
        h = _reorthogonalize(h, state.u_hat.matrix, state.tau)
    alpha_hat_next = float(np.linalg.norm(h))
    state.alpha_hat.append(alpha_hat_next)
    if alpha_hat_next < state.tau:
        break_down(f"alpha_hat_{i + 1}", alpha_hat_next)
    state.u_hat.append(h / alpha_hat_next)

    state.k = i
    state.records.append(record)
    if record.reorth_u or record.reorth_v or record.swept_u or record.swept_v:
        logger.debug(
            f"Step {i}: reorthogonalized u={record.reorth_u} v={record.reorth_v}, "
            f"re-swept {record.swept_u} u / {record.swept_v} v columns "
            f"(xi_u={record.xi_u}, xi_v={record.xi_v}, bar={record.semi_bar})"
        )
    if record.coupling_gap > settings.coupling_gap_warn * max(beta_hat, state.tau):
        logger.debug(
            f"Step {i}: beta_hat_{i} = {beta_hat:.6e} differs from the coupled "
            f"value {coupled:.6e} by {record.coupling_gap:.3e}"
        )
    return state


@dataclass
class HistoryEntry:
    """Ritz information recorded after one step."""

    k: int
    lower_values: np.ndarray
    upper_values: np.ndarray
    pairs: List[RitzApproximation]
    inv_norm_lower: float
    inv_norm_upper: float

    @property
    def bounds(self) -> List[float]:
        return [pair.residual_bound for pair in self.pairs]


@dataclass
class ConvergenceHistory:
    entries: List[HistoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, index: int) -> HistoryEntry:
        return self.entries[index]

    @property
    def last(self) -> Optional[HistoryEntry]:
        return self.entries[-1] if self.entries else None

    def series(self, rank: int = 1) -> List[Tuple[int, float, float, float]]:
        """(k, c, s, residual_bound) of the rank-th selected pair over the run."""
        rows = []
        for entry in self.entries:
            if len(entry.pairs) >= rank:
                pair = entry.pairs[rank - 1]
                rows.append((entry.k, pair.c, pair.s, pair.residual_bound))
        return rows


def _record_history(state: JbdState, rule: StoppingRule, norm_R: float) -> HistoryEntry:
    svd = svd_lower(state.lower)
    count = min(rule.target_count, state.k)
    pairs = extract_ritz_from_lower(state, count, rule.which, norm_estimate=norm_R, svd=svd)
    upper_values = singular_values(state.upper)
    inv_upper = np.inf if upper_values[-1] == 0.0 else 1.0 / float(upper_values[-1])
    return HistoryEntry(
        k=state.k,
        lower_values=svd.values.copy(),
        upper_values=upper_values,
        pairs=pairs,
        inv_norm_lower=inverse_norm(state.leading_lower),
        inv_norm_upper=inv_upper,
    )


def run_jbd(
    op: StackedOperator,
    b: np.ndarray,
    strategy: Optional[ReorthStrategy] = None,
    cfg: Optional[LsqrConfig] = None,
    max_steps: int = 100,
    stop: Optional[StoppingRule] = None,
    mode: Optional[ProjectionMode] = None,
    swapped: bool = False,
    callback: Optional[Callable[[JbdState, HistoryEntry], None]] = None,
) -> Tuple[JbdState, ConvergenceHistory]:
    """
    Drive the recurrence until breakdown, the step limit or the stopping rule.

    After every step the selected extreme Ritz pairs and their residual
    bounds are recorded. Without a stopping rule the run tracks the largest
    pair and only ends on breakdown or the step limit.

    Args:
        op: Stacked operator
        b: Starting vector of length m
        strategy: Reorthogonalization strategy
        cfg: LSQR parameters
        max_steps: Step limit, at least 1
        stop: Stopping rule
        mode: Projection path
        swapped: Whether op holds the pair in exchanged order
        callback: Called with (state, entry) after every step

    Returns:
        Tuple of (final state, convergence history); a breakdown while
        starting returns the state at k = 0 with an empty history

    Raises:
        ValueError: If max_steps < 1
        NotConvergedError, NoConvergenceError: Propagated from the steps
    """
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")

    enforce = stop is not None
    rule = stop or StoppingRule(target_count=1, which=Which.LARGEST)
    norm_R = rule.norm_estimate
    if norm_R is None:
        norm_R = estimate_stacked_norm(op)

    history = ConvergenceHistory()
    try:
        state = jbd_init(op, b, strategy, cfg, mode, norm_estimate=norm_R, swapped=swapped)
    except BreakdownError as e:
        if e.state is None:
            raise
        return e.state, history
    previous_values = None

    while state.k < max_steps:
        try:
            jbd_step(state)
        except BreakdownError as e:
            if e.state is not state:
                raise
        entry = _record_history(state, rule, norm_R)
        history.entries.append(entry)

        if settings.debug_checks and previous_values is not None:
            if not check_interlacing(previous_values, entry.lower_values):
                logger.warning(f"Ritz values at k={state.k} do not interlace with step {state.k - 1}")
        previous_values = entry.lower_values

        if callback is not None:
            callback(state, entry)

        if state.terminated:
            break
        if enforce and len(entry.pairs) == rule.target_count:
            if all(bound <= rule.tolerance for bound in entry.bounds):
                state.terminated = True
                state.termination_reason = "converged"
                logger.info(
                    f"Converged at k={state.k}: {rule.target_count} {rule.which.value} "
                    f"pair(s) with bound <= {rule.tolerance:.1e}"
                )
                break

    if not state.terminated:
        state.terminated = True
        state.termination_reason = "max_steps"
        logger.info(f"Stopped at the step limit k={state.k}")
    return state, history


def _condition_estimate(matrix: SparseMatrix) -> float:
    """Rough condition number from a short Lanczos bidiagonalization."""
    if matrix.rows < matrix.cols:
        return np.inf
    largest, smallest = lanczos_extreme_singular_values(
        matrix.as_operator(), np.ones(matrix.rows), settings.swap_probe_iterations
    )
    if smallest == 0.0:
        return np.inf
    return largest / smallest


def maybe_swap_pair(
    A: SparseMatrix,
    L: SparseMatrix,
    hint: PairOrder = PairOrder.AUTO,
    reference: bool = False,
) -> Tuple[StackedOperator, bool]:
    """
    Order {A, L} so that the better conditioned matrix drives B_k.

    In auto mode the condition numbers of both matrices are estimated by a
    short Lanczos bidiagonalization; wide matrices count as infinitely ill
    conditioned. Extraction uses the returned flag to restore labels.

    Args:
        A: First matrix of the pair
        L: Second matrix of the pair
        hint: auto, keep or swap
        reference: Also build the dense Householder cache of the result

    Returns:
        Tuple of (stacked operator, swapped)
    """
    hint = PairOrder(hint)
    if A.cols != L.cols:
        raise DimensionMismatchError(
            f"A is {A.rows}x{A.cols} but L is {L.rows}x{L.cols}; column counts must match"
        )

    if hint is PairOrder.AUTO:
        try:
            kappa_a = _condition_estimate(A)
            kappa_l = _condition_estimate(L)
        except NumericalError as e:
            logger.warning(f"Condition estimate failed, keeping pair order: {str(e)}")
            kappa_a = kappa_l = np.inf
        swapped = kappa_l < kappa_a
        logger.info(
            f"Pair ordering: kappa(A)~{kappa_a:.4g}, kappa(L)~{kappa_l:.4g} -> "
            f"{'swap' if swapped else 'keep'}"
        )
    else:
        swapped = hint is PairOrder.SWAP
        logger.info(f"Pair ordering fixed by hint: {hint.value}")

    op = StackedOperator(L, A) if swapped else StackedOperator(A, L)
    if reference:
        op = op.with_reference_cache()
    return op, swapped
