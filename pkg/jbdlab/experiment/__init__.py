"""
Experiment runner

Runs one joint bidiagonalization experiment end to end: builds or reads
the pair, orders it, runs the recurrence with residual-bound stopping,
samples diagnostics, extracts the final approximate GSVD components and
writes the history, diagnostics, summary and plot-data files.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from jbdlab.config import settings
from jbdlab.core import (
    ConvergenceHistory,
    HistoryEntry,
    JbdState,
    PairOrder,
    ReorthKind,
    ReorthStrategy,
    maybe_swap_pair,
    run_jbd,
)
from jbdlab.dense import subspace_angle_sin
from jbdlab.diagnostics import DiagnosticsReport, coupling_ratio, diagnose
from jbdlab.errors import (
    ConfigurationError,
    JbdError,
    NumericalError,
)
from jbdlab.extract import (
    RitzApproximation,
    StoppingRule,
    Which,
    angle_error,
    approximate_gsvd,
    recover_right_vector,
    relative_error,
    residual_direct,
)
from jbdlab.inner import LsqrConfig, ProjectionMode
from jbdlab.sparse import SparseMatrix, read_matrix_market
from jbdlab.testgen import (
    BUILTIN_PAIRS,
    ConstructedPair,
    build_pair,
    make_first_derivative,
    make_scaled_diag,
)
from jbdlab.utils import ArtifactWriter

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_NUMERICAL = 1
EXIT_CONFIGURATION = 2

GENERATED_OPERATORS = ("@first-derivative", "@scaled-diag")
RITZ_COLUMNS_KEPT = 10

HISTORY_HEADER = ["k", "ritz_index", "c", "s", "residual_bound", "residual_direct", "angle_error"]
DIAGNOSTICS_HEADER = [
    "k",
    "eta_U",
    "eta_Vtilde",
    "eta_Uhat",
    "thm3_4_bound",
    "norm_Fk",
    "bound_Fk",
    "norm_Ek",
    "norm_Fhat",
    "norm_Ghat",
    "inv_norm_Blower",
    "inv_norm_Bhat",
]


class ExperimentConfig(BaseModel):
    """Everything one experiment run needs; either a builtin pair or matrix files."""

    model_config = ConfigDict(frozen=True)

    pair: Optional[str] = Field(default=None, description="Builtin pair name")
    size: int = Field(default=200, ge=1, description="Order of a builtin pair")
    matrix_a: Optional[Path] = Field(default=None, description="Matrix Market file for A")
    matrix_l: Optional[str] = Field(
        default=None,
        description="Matrix Market file for L, or @first-derivative / @scaled-diag",
    )
    reorth: ReorthKind = ReorthKind.FULL
    semi_denominator: Literal["2k+1", "k"] = Field(default_factory=lambda: settings.semi_denominator)
    max_steps: int = Field(default=150, ge=1)
    tol: float = Field(default=1e-10, gt=0.0)
    want: int = Field(default=1, ge=1)
    which: Which = Which.LARGEST
    inner_mode: Optional[ProjectionMode] = None
    inner_tol: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    diag_stride: int = Field(default_factory=lambda: settings.diag_stride, ge=1)
    out: Path = Field(default_factory=lambda: Path(settings.out_dir))
    seed: int = 0
    swap: PairOrder = PairOrder.KEEP
    start: Literal["ones", "random"] = "ones"
    with_z: bool = False

    @model_validator(mode="before")
    @classmethod
    def _default_pair(cls, data):
        if isinstance(data, dict) and data.get("matrix_a") is None and data.get("pair") is None:
            data = {**data, "pair": "Ac_Ls"}
        return data

    @model_validator(mode="after")
    def _check_source(self) -> "ExperimentConfig":
        if self.matrix_a is None:
            if self.matrix_l is not None:
                raise ValueError("--matrix-l needs --matrix-a")
            if self.pair not in BUILTIN_PAIRS:
                raise ValueError(
                    f"unknown builtin pair '{self.pair}' (choose from {', '.join(BUILTIN_PAIRS)})"
                )
        else:
            if self.pair is not None:
                raise ValueError("use either --pair or --matrix-a, not both")
            if self.matrix_l is None:
                raise ValueError("file mode needs --matrix-l (a file or a generated operator)")
        return self

    @property
    def file_mode(self) -> bool:
        return self.matrix_a is not None

    def label(self) -> str:
        source = self.pair if not self.file_mode else Path(self.matrix_a).stem
        return f"{source}-{self.reorth.value}"

    def lsqr(self) -> LsqrConfig:
        if self.inner_tol is None:
            return LsqrConfig()
        return LsqrConfig(atol=self.inner_tol, btol=self.inner_tol)


@dataclass
class LoadedPair:
    A: SparseMatrix
    L: SparseMatrix
    name: str
    truth: Optional[ConstructedPair] = None


@dataclass
class ExperimentResult:
    exit_code: int
    out_dir: Path
    summary: Dict = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    error: Optional[str] = None


def exit_code_for(error: BaseException) -> int:
    """Numerical failures exit with 1, configuration and IO failures with 2."""
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIGURATION


def record_failure(out_dir: Path, error: BaseException) -> Tuple[int, Optional[Path]]:
    """
    Write error.json for a failed run.

    Returns:
        Tuple of (exit code, path of the record or None if it could not be written)
    """
    code = exit_code_for(error)
    payload = {
        "exit_code": code,
        "error_type": type(error).__name__,
        "message": str(error),
    }
    path = getattr(error, "filename", None)
    if path:
        payload["path"] = str(path)
    try:
        return code, ArtifactWriter(out_dir).write_json("error.json", payload)
    except OSError as e:
        logger.error(f"Could not write error record: {str(e)}")
        return code, None


def load_pair(cfg: ExperimentConfig) -> LoadedPair:
    """
    Build the builtin pair or read the matrix files.

    Raises:
        FileNotFoundError: If a matrix file is missing
        MatrixMarketError: On unreadable matrix files
        DomainError: On invalid builtin sizes
    """
    if not cfg.file_mode:
        truth = build_pair(cfg.pair, cfg.size)
        logger.info(f"Built pair '{cfg.pair}' of order {cfg.size}")
        return LoadedPair(A=truth.A, L=truth.L, name=cfg.pair, truth=truth)

    A = read_matrix_market(cfg.matrix_a)
    if cfg.matrix_l == "@first-derivative":
        L = make_first_derivative(A.cols)
    elif cfg.matrix_l == "@scaled-diag":
        L = make_scaled_diag(A.cols)
    elif str(cfg.matrix_l).startswith("@"):
        raise ConfigurationError(
            f"unknown generated operator '{cfg.matrix_l}' "
            f"(choose from {', '.join(GENERATED_OPERATORS)})"
        )
    else:
        L = read_matrix_market(cfg.matrix_l)
    return LoadedPair(A=A, L=L, name=Path(cfg.matrix_a).stem)


def start_vector(cfg: ExperimentConfig, m: int) -> np.ndarray:
    if cfg.start == "ones":
        return np.ones(m)
    return np.random.default_rng(cfg.seed).standard_normal(m)


def truth_pairs(truth: ConstructedPair, which: Which) -> List[Tuple[float, float, int]]:
    """Ground-truth (c, s, original index) ordered from the wanted end."""
    order = np.argsort(-truth.c, kind="stable")
    if which is Which.SMALLEST:
        order = order[::-1]
    return [(float(truth.c[i]), float(truth.s[i]), int(i)) for i in order]


def _original_pair(state: JbdState) -> Tuple[SparseMatrix, SparseMatrix]:
    op = state.op
    return (op.L, op.A) if state.swapped else (op.A, op.L)


def _annotate_direct_residuals(state: JbdState, pairs: List[RitzApproximation]) -> None:
    A, L = _original_pair(state)
    for pair in pairs:
        pair.x = recover_right_vector(state.op, state, pair.w)
        pair.residual_direct = residual_direct(A, L, pair)


def emit_plot_data(
    history: ConvergenceHistory,
    reports: List[DiagnosticsReport],
    writer: ArtifactWriter,
    truth: Optional[Tuple[float, float]] = None,
) -> List[Path]:
    """
    Write one CSV per plot family with k in the first column.

    Args:
        history: Per-step Ritz history
        reports: Sampled diagnostics
        writer: Destination
        truth: (c, s) of the tracked pair, when known

    Raises:
        ValueError: If the history is empty (nothing is written)
        OutputError: If a file cannot be written
    """
    if len(history) == 0:
        raise ValueError("empty history: no plot data to write")

    nan = float("nan")
    files = []

    errors = [(report, report.errors) for report in reports]
    files.append(
        writer.write_csv(
            "fig1_Fk.csv",
            ["k", "norm_Fk", "norm_Gk", "bound_Fk", "inv_norm_Blower"],
            (
                [
                    report.k,
                    err.norm_F if err else nan,
                    err.norm_G if err else nan,
                    err.bound_F() if err else nan,
                    report.inv_norm_lower,
                ]
                for report, err in errors
            ),
        )
    )
    files.append(
        writer.write_csv(
            "fig2_Ek.csv",
            ["k", "norm_Ek", "ratio_to_eps"],
            ([report.k, report.norm_E, coupling_ratio(report.norm_E)] for report in reports),
        )
    )
    files.append(
        writer.write_csv(
            "fig3_Fhat_Ghat.csv",
            ["k", "norm_Fhat", "norm_Ghat", "bound_Ghat", "inv_norm_Blower", "inv_norm_Bhat"],
            (
                [
                    report.k,
                    err.norm_F_hat if err else nan,
                    err.norm_G_hat if err else nan,
                    err.bound_G_hat() if err else nan,
                    report.inv_norm_lower,
                    report.inv_norm_upper,
                ]
                for report, err in errors
            ),
        )
    )
    files.append(
        writer.write_csv(
            "fig4_etaUhat.csv",
            ["k", "eta_Uhat", "thm3_4_bound", "eta_U", "eta_Vtilde"],
            (
                [
                    report.k,
                    report.levels_U_hat.eta,
                    report.uhat_bound,
                    report.levels_U.eta,
                    report.levels_V_tilde.eta,
                ]
                for report in reports
            ),
        )
    )

    lower_rows, upper_rows = [], []
    for entry in history:
        for index, value in enumerate(entry.lower_values[:RITZ_COLUMNS_KEPT], start=1):
            lower_rows.append([entry.k, index, value])
        ascending = entry.upper_values[::-1]
        for index, value in enumerate(ascending[:RITZ_COLUMNS_KEPT], start=1):
            upper_rows.append([entry.k, index, value])
    files.append(writer.write_csv("fig5_ritz_lower.csv", ["k", "index", "value"], lower_rows))
    files.append(writer.write_csv("fig6_ritz_upper.csv", ["k", "index", "value"], upper_rows))

    residual_rows = []
    for entry in history:
        if not entry.pairs:
            continue
        pair = entry.pairs[0]
        rel = angle = nan
        if truth is not None:
            rel = relative_error(pair.c, pair.s, *truth)
            angle = angle_error(pair.c, pair.s, *truth)
        direct = pair.residual_direct if pair.residual_direct is not None else nan
        residual_rows.append([entry.k, direct, pair.residual_bound, rel, angle])
    files.append(
        writer.write_csv(
            "fig9_residual.csv",
            ["k", "residual_direct", "residual_bound", "relative_error", "angle_error"],
            residual_rows,
        )
    )
    return files


def _history_rows(
    history: ConvergenceHistory,
    truth: Optional[List[Tuple[float, float, int]]],
) -> List[list]:
    rows = []
    for entry in history:
        for pair in entry.pairs:
            angle = None
            if truth is not None and pair.index <= len(truth):
                c_t, s_t, _ = truth[pair.index - 1]
                angle = angle_error(pair.c, pair.s, c_t, s_t)
            rows.append(
                [entry.k, pair.index, pair.c, pair.s, pair.residual_bound, pair.residual_direct, angle]
            )
    return rows


def _final_pairs_summary(
    pairs: List[RitzApproximation],
    loaded: LoadedPair,
    truth: Optional[List[Tuple[float, float, int]]],
) -> List[dict]:
    summaries = []
    for pair in pairs:
        item = pair.summary()
        if truth is not None and pair.index <= len(truth):
            c_t, s_t, original = truth[pair.index - 1]
            item["true_c"] = c_t
            item["true_s"] = s_t
            item["angle_error"] = angle_error(pair.c, pair.s, c_t, s_t)
            item["relative_error"] = relative_error(pair.c, pair.s, c_t, s_t)
            if pair.x is not None:
                item["x_angle"] = subspace_angle_sin(pair.x, loaded.truth.right_vectors[:, original])
            if pair.y is not None and np.linalg.norm(pair.y) > 0:
                item["y_angle"] = subspace_angle_sin(pair.y, loaded.truth.left_vector_a(original))
            if pair.z is not None and np.linalg.norm(pair.z) > 0:
                item["z_angle"] = subspace_angle_sin(pair.z, loaded.truth.left_vector_l(original))
        summaries.append(item)
    return summaries


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """
    Run one experiment and write its artifacts.

    Any library failure is caught, logged, recorded in error.json and mapped
    to an exit code: 1 for numerical failures, 2 for configuration, parse
    and IO failures.

    Args:
        cfg: Validated experiment configuration

    Returns:
        ExperimentResult with the exit code, summary and files written
    """
    out_dir = Path(cfg.out)
    try:
        return _run(cfg, out_dir)
    except (JbdError, OSError, ValueError, ValidationError) as e:
        code = exit_code_for(e)
        logger.error(f"Experiment failed ({type(e).__name__}): {str(e)}")
        _, record = record_failure(out_dir, e)
        return ExperimentResult(
            exit_code=code,
            out_dir=out_dir,
            files=[record] if record else [],
            error=str(e),
        )


def _run(cfg: ExperimentConfig, out_dir: Path) -> ExperimentResult:
    started = time.perf_counter()
    loaded = load_pair(cfg)

    mode = cfg.inner_mode
    op, swapped = maybe_swap_pair(loaded.A, loaded.L, cfg.swap)
    if mode is None:
        mode = op.default_mode()
    if mode is ProjectionMode.REFERENCE:
        op = op.with_reference_cache()

    strategy = ReorthStrategy(kind=cfg.reorth, semi_denominator=cfg.semi_denominator)
    stop = StoppingRule(target_count=cfg.want, which=cfg.which, tolerance=cfg.tol)
    truth = truth_pairs(loaded.truth, cfg.which) if loaded.truth is not None else None
    reports: List[DiagnosticsReport] = []

    def on_step(state: JbdState, entry: HistoryEntry) -> None:
        if mode is ProjectionMode.REFERENCE:
            _annotate_direct_residuals(state, entry.pairs)
        if state.k == 1 or state.k % cfg.diag_stride == 0 or state.terminated:
            reports.append(diagnose(state))

    state, history = run_jbd(
        op,
        start_vector(cfg, op.m),
        strategy=strategy,
        cfg=cfg.lsqr(),
        max_steps=cfg.max_steps,
        stop=stop,
        mode=mode,
        swapped=swapped,
        callback=on_step,
    )
    pairs: List[RitzApproximation] = []
    if state.k == 0:
        logger.warning("Breakdown before the first step: no Ritz pairs, diagnostics or plot data")
    else:
        if not reports or reports[-1].k != state.k:
            reports.append(diagnose(state))
        count = min(cfg.want, state.k)
        pairs = approximate_gsvd(state, count, cfg.which, cfg.lsqr(), with_z=cfg.with_z)
    elapsed = time.perf_counter() - started

    writer = ArtifactWriter(out_dir)
    writer.write_csv("history.csv", HISTORY_HEADER, _history_rows(history, truth))
    if reports:
        writer.write_records("diagnostics.csv", [report.as_row() for report in reports])
        tracked = (truth[0][0], truth[0][1]) if truth else None
        emit_plot_data(history, reports, writer, tracked)

    summary = {
        "label": cfg.label(),
        "pair": loaded.name,
        "m": loaded.A.rows,
        "p": loaded.L.rows,
        "n": loaded.A.cols,
        "strategy": strategy.kind.value,
        "semi_denominator": strategy.semi_denominator,
        "mode": mode.value,
        "swapped": swapped,
        "steps": state.k,
        "termination_reason": state.termination_reason,
        "norm_estimate": state.norm_estimate,
        "elapsed_seconds": elapsed,
        "pairs": _final_pairs_summary(pairs, loaded, truth),
        "verifiers_hold": all(report.all_hold for report in reports),
        "max_inv_norm_Bhat": max((entry.inv_norm_upper for entry in history), default=None),
        "final_diagnostics": reports[-1].extras() if reports else None,
        "config": cfg.model_dump(mode="json"),
    }
    writer.write_json("summary.json", summary)
    logger.info(
        f"Experiment {cfg.label()} finished: k={state.k} ({state.termination_reason}) "
        f"in {elapsed:.2f}s"
    )
    return ExperimentResult(exit_code=EXIT_SUCCESS, out_dir=out_dir, summary=summary, files=writer.written)
