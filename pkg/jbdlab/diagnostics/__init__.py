"""
Finite-precision diagnostics for joint bidiagonalization runs

Orthogonality levels of the computed bases, norms of the recurrence error
matrices, and numerical checks of the rounding-error bounds that relate
them to ||inv(B_lower_k)|| and ||inv(B_hat_k)||. Everything that needs the
projector Q works on reference-mode runs only.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from jbdlab.bidiag import SignAlternation, identity_defect, inverse_norm, norm_caps
from jbdlab.config import EPS, settings
from jbdlab.dense import as_matrix
from jbdlab.extract import RitzApproximation
from jbdlab.inner import StackedOperator

if TYPE_CHECKING:
    from jbdlab.core import JbdState

logger = logging.getLogger(__name__)


class VerificationTolerances(BaseModel):
    """Explicit allowances standing in for the O(eps) terms of the bounds."""

    model_config = ConfigDict(frozen=True)

    small: float = Field(
        default_factory=lambda: settings.small_factor * EPS,
        gt=0.0,
        description="O(eps) slack added to every bound",
    )
    basis: float = Field(
        default_factory=lambda: settings.basis_factor * EPS,
        gt=0.0,
        description="Per-step tail allowance of the residual bound",
    )
    relative_slack: float = Field(
        default_factory=lambda: settings.projection_relative_slack,
        ge=0.0,
        description="Relative slack on the projection deviation bound",
    )
    plot_factor: float = Field(
        default_factory=lambda: settings.plot_bound_factor,
        gt=0.0,
        description="Multiple of ||inv(B)|| * eps drawn as the estimated error bound",
    )


@dataclass(frozen=True)
class OrthoLevels:
    """xi = largest off-diagonal |w_i^T w_j|, eta = ||I - W^T W||, norm = ||W||."""

    xi: float
    eta: float
    order: int
    norm: float = 0.0

    @property
    def norm_holds(self) -> bool:
        """||W|| <= sqrt(1 + eta) up to rounding in the Gram matrix."""
        return self.norm <= np.sqrt(1.0 + self.eta) + settings.small_factor * EPS * max(self.order, 1)


def ortho_levels(W: np.ndarray) -> OrthoLevels:
    """Orthogonality levels from the explicit Gram matrix of W."""
    W = as_matrix(W, "W")
    k = W.shape[1]
    if k == 0:
        return OrthoLevels(xi=0.0, eta=0.0, order=0)

    defect = np.eye(k) - W.T @ W
    off_diagonal = defect - np.diag(np.diag(defect))
    xi = float(np.max(np.abs(off_diagonal)))
    eigenvalues = scipy.linalg.eigvalsh(defect, check_finite=False)
    eta = float(np.max(np.abs(eigenvalues)))
    levels = OrthoLevels(xi=xi, eta=eta, order=k, norm=_spectral_norm(W))
    if not levels.norm_holds:
        logger.warning(
            f"||W|| = {levels.norm:.17g} exceeds sqrt(1 + eta) = {np.sqrt(1.0 + eta):.17g} "
            f"for a basis of {k} columns"
        )
    return levels


@dataclass(frozen=True)
class ErrorMatrixNorms:
    """Spectral norms of the recurrence error matrices after k steps."""

    k: int
    norm_F_tilde: float
    norm_G_tilde: float
    norm_F_bar: float
    norm_F: float
    norm_G: float
    norm_E: float
    norm_F_hat: float
    norm_G_hat: float
    inv_norm_lower: float
    inv_norm_upper: float
    deviation: float

    def bound_F(self, factor: Optional[float] = None) -> float:
        """Estimated bound factor * ||inv(B_lower_k)|| * eps for ||F_k|| and ||G_{k+1}||."""
        factor = settings.plot_bound_factor if factor is None else factor
        return factor * self.inv_norm_lower * EPS

    def bound_G_hat(self, factor: Optional[float] = None) -> float:
        """Estimated bound for ||F_hat_k|| and ||G_hat_k||."""
        factor = settings.plot_bound_factor if factor is None else factor
        return factor * (self.inv_norm_lower + self.inv_norm_upper) * EPS


def _spectral_norm(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(matrix, 2))


def _cached(state: "JbdState", op: Optional[StackedOperator]) -> StackedOperator:
    op = op or state.op
    op._require_cache()
    if state.k < 1:
        raise ValueError("diagnostics need at least one completed step")
    return op


def _g_tilde(state: "JbdState", op: StackedOperator) -> np.ndarray:
    """G_tilde_{k+1} = QQ^T (U_{k+1}; 0) - V_tilde_k B_k^T - alpha_{k+1} v_tilde_{k+1} e_{k+1}^T."""
    U = state.U
    B = state.lower.to_dense()
    g = op.q @ (op.q_a.T @ U) - state.V_tilde @ B.T
    g[:, -1] -= state.next_alpha * state.next_v_tilde
    return g


def measure_recurrence_errors(
    state: "JbdState",
    op: Optional[StackedOperator] = None,
) -> ErrorMatrixNorms:
    """
    Form every recurrence error matrix of the run explicitly and record its norm.

    Args:
        state: State after k >= 1 steps
        op: Operator carrying the dense Q factor; defaults to the state's operator

    Raises:
        MissingCacheError: If no dense Q factor is available
    """
    op = _cached(state, op)
    k, m = state.k, state.m
    U, V_tilde, U_hat = state.U, state.V_tilde, state.U_hat
    lower, upper = state.lower, state.upper
    B, B_hat = lower.to_dense(), upper.to_dense()
    signs = SignAlternation(k)

    F_tilde = V_tilde[:m] - U @ B
    G_tilde = _g_tilde(state, op)
    F_bar = signs.apply_right(V_tilde[m:]) - U_hat @ B_hat

    V = op.q.T @ V_tilde
    v_next = op.q.T @ state.next_v_tilde
    F = op.q_a @ V - U @ B
    G = op.q_a.T @ U - V @ B.T
    G[:, -1] -= state.next_alpha * v_next

    V_hat = signs.apply_right(V)
    v_hat_next = (-1.0) ** k * v_next
    F_hat = op.q_l @ V_hat - U_hat @ B_hat
    G_hat = op.q_l.T @ U_hat - V_hat @ B_hat.T
    G_hat[:, -1] -= state.next_beta_hat * v_hat_next

    norms = ErrorMatrixNorms(
        k=k,
        norm_F_tilde=_spectral_norm(F_tilde),
        norm_G_tilde=_spectral_norm(G_tilde),
        norm_F_bar=_spectral_norm(F_bar),
        norm_F=_spectral_norm(F),
        norm_G=_spectral_norm(G),
        norm_E=identity_defect(lower, upper).norm,
        norm_F_hat=_spectral_norm(F_hat),
        norm_G_hat=_spectral_norm(G_hat),
        inv_norm_lower=inverse_norm(state.leading_lower),
        inv_norm_upper=inverse_norm(upper),
        deviation=_spectral_norm(V_tilde - op.q @ V),
    )
    logger.debug(
        f"k={k}: ||F||={norms.norm_F:.3e} ||E||={norms.norm_E:.3e} "
        f"||G_hat||={norms.norm_G_hat:.3e} ||inv(B)||={norms.inv_norm_lower:.3e}"
    )
    return norms


def verify_projection_deviation(
    state: "JbdState",
    op: Optional[StackedOperator] = None,
    tolerances: Optional[VerificationTolerances] = None,
) -> Tuple[float, float, bool]:
    """
    Compare ||V_tilde_k - Q V_k|| with ||G_tilde_k inv(B_lower_k)||.

    The columns of V_tilde_k leave range(Q) only through the first k
    columns of G_tilde_{k+1}, amplified by inv(B_lower_k).

    Returns:
        Tuple of (lhs, rhs, holds)

    Raises:
        MissingCacheError: If no dense Q factor is available
    """
    op = _cached(state, op)
    tolerances = tolerances or VerificationTolerances()
    V_tilde = state.V_tilde
    lhs = _spectral_norm(V_tilde - op.q @ (op.q.T @ V_tilde))

    G_k = _g_tilde(state, op)[:, : state.k]
    B_lower = state.leading_lower.to_dense()
    if np.min(np.abs(np.diag(B_lower))) == 0.0:
        rhs = np.inf
    else:
        # X B_lower = G_k  <=>  B_lower^T X^T = G_k^T
        solved = scipy.linalg.solve_triangular(B_lower.T, G_k.T, lower=True, check_finite=False)
        rhs = _spectral_norm(solved.T)

    holds = lhs <= rhs * (1.0 + tolerances.relative_slack) + tolerances.small
    if not holds:
        logger.warning(f"k={state.k}: projection deviation {lhs:.3e} exceeds bound {rhs:.3e}")
    return lhs, float(rhs), bool(holds)


def verify_uhat_orthogonality_bound(
    state: "JbdState",
    tolerances: Optional[VerificationTolerances] = None,
) -> Tuple[float, float, bool]:
    """
    Check eta(U_hat_k) <= ||inv(B_hat_k)||^2 (eta(V_tilde_k) + 2 eta(U_{k+1}) + small).

    Uses the stored bases only, so it also applies to iterative-mode runs.

    Returns:
        Tuple of (eta_uhat, bound, holds)
    """
    tolerances = tolerances or VerificationTolerances()
    eta_uhat = ortho_levels(state.U_hat).eta
    eta_v = ortho_levels(state.V_tilde).eta
    eta_u = ortho_levels(state.stored_U).eta
    bound = inverse_norm(state.upper) ** 2 * (eta_v + 2.0 * eta_u + tolerances.small)
    holds = eta_uhat <= bound
    if not holds:
        logger.warning(f"k={state.k}: eta(U_hat)={eta_uhat:.3e} exceeds bound {bound:.3e}")
    return eta_uhat, float(bound), bool(holds)


def verify_vtilde_gap(
    state: "JbdState",
    op: Optional[StackedOperator] = None,
    tolerances: Optional[VerificationTolerances] = None,
) -> Tuple[float, bool]:
    """
    Check that eta(V_tilde_k) and eta(Q^T V_tilde_k) agree up to
    ||inv(B_lower_k)||^2 small^2 + small.

    Returns:
        Tuple of (gap, holds)

    Raises:
        MissingCacheError: If no dense Q factor is available
    """
    op = _cached(state, op)
    tolerances = tolerances or VerificationTolerances()
    V_tilde = state.V_tilde
    gap = abs(ortho_levels(V_tilde).eta - ortho_levels(op.q.T @ V_tilde).eta)
    allowance = inverse_norm(state.leading_lower) ** 2 * tolerances.small**2 + tolerances.small
    return float(gap), bool(gap <= allowance)


def verify_residual_bound(
    state: "JbdState",
    pair: RitzApproximation,
    tolerances: Optional[VerificationTolerances] = None,
) -> Tuple[float, float, bool]:
    """
    Check residual_bound + basis * ||inv(B_lower_k)|| * ||R||^2 >= residual_direct.

    Returns:
        Tuple of (bound with tail, direct residual, holds)
    """
    if pair.residual_bound is None or pair.residual_direct is None:
        raise ValueError("pair needs both a residual bound and a direct residual")
    tolerances = tolerances or VerificationTolerances()
    tail = tolerances.basis * inverse_norm(state.leading_lower) * state.norm_estimate**2
    bound = pair.residual_bound + tail
    holds = bound >= pair.residual_direct
    if not holds:
        logger.warning(
            f"k={state.k}: direct residual {pair.residual_direct:.3e} exceeds "
            f"bound {bound:.3e} for pair {pair.index}"
        )
    return float(bound), float(pair.residual_direct), bool(holds)


def coupling_ratio(norm_E: float) -> float:
    """||E_k|| in units of eps; recorded for reporting, never enforced."""
    return float(norm_E / EPS)


@dataclass(frozen=True)
class DiagnosticsReport:
    """One sampled diagnostics row; error norms are absent without a dense Q."""

    k: int
    levels_U: OrthoLevels
    levels_V_tilde: OrthoLevels
    levels_U_hat: OrthoLevels
    uhat_bound: float
    norm_E: float
    norm_B: float
    norm_B_hat: float
    inv_norm_lower: float
    inv_norm_upper: float
    errors: Optional[ErrorMatrixNorms] = None
    projection: Optional[Tuple[float, float, bool]] = None
    vtilde_gap: Optional[Tuple[float, bool]] = None

    @property
    def all_hold(self) -> bool:
        checks = [self.levels_U_hat.eta <= self.uhat_bound]
        checks.extend(
            levels.norm_holds for levels in (self.levels_U, self.levels_V_tilde, self.levels_U_hat)
        )
        if self.projection is not None:
            checks.append(self.projection[2])
        if self.vtilde_gap is not None:
            checks.append(self.vtilde_gap[1])
        return all(checks)

    def as_row(self) -> dict:
        """Columns of the diagnostics table."""
        nan = float("nan")
        errors = self.errors
        return {
            "k": self.k,
            "eta_U": self.levels_U.eta,
            "eta_Vtilde": self.levels_V_tilde.eta,
            "eta_Uhat": self.levels_U_hat.eta,
            "thm3_4_bound": self.uhat_bound,
            "norm_Fk": errors.norm_F if errors else nan,
            "bound_Fk": errors.bound_F() if errors else nan,
            "norm_Ek": self.norm_E,
            "norm_Fhat": errors.norm_F_hat if errors else nan,
            "norm_Ghat": errors.norm_G_hat if errors else nan,
            "inv_norm_Blower": self.inv_norm_lower,
            "inv_norm_Bhat": self.inv_norm_upper,
        }

    def extras(self) -> dict:
        """Quantities reported in the summary but not in the diagnostics table."""
        errors = self.errors
        return {
            "k": self.k,
            "xi_U": self.levels_U.xi,
            "xi_Vtilde": self.levels_V_tilde.xi,
            "norm_B": self.norm_B,
            "norm_Bbar": self.norm_B_hat,
            "coupling_ratio": coupling_ratio(self.norm_E),
            "norm_F_tilde": errors.norm_F_tilde if errors else None,
            "norm_G_tilde": errors.norm_G_tilde if errors else None,
            "norm_F_bar": errors.norm_F_bar if errors else None,
            "norm_G": errors.norm_G if errors else None,
            "deviation": errors.deviation if errors else None,
            "projection_holds": self.projection[2] if self.projection else None,
            "vtilde_gap_holds": self.vtilde_gap[1] if self.vtilde_gap else None,
        }


def diagnose(
    state: "JbdState",
    op: Optional[StackedOperator] = None,
    tolerances: Optional[VerificationTolerances] = None,
) -> DiagnosticsReport:
    """Collect every available diagnostic for the current step."""
    if state.k < 1:
        raise ValueError("diagnostics need at least one completed step")
    tolerances = tolerances or VerificationTolerances()
    op = op or state.op

    eta_uhat, uhat_bound, _ = verify_uhat_orthogonality_bound(state, tolerances)
    norm_B, norm_B_hat = norm_caps(state.lower, state.upper)

    errors = projection = gap = None
    if op.has_cache:
        errors = measure_recurrence_errors(state, op)
        projection = verify_projection_deviation(state, op, tolerances)
        gap = verify_vtilde_gap(state, op, tolerances)

    return DiagnosticsReport(
        k=state.k,
        levels_U=ortho_levels(state.stored_U),
        levels_V_tilde=ortho_levels(state.V_tilde),
        levels_U_hat=ortho_levels(state.U_hat),
        uhat_bound=uhat_bound,
        norm_E=identity_defect(state.lower, state.upper).norm,
        norm_B=norm_B,
        norm_B_hat=norm_B_hat,
        inv_norm_lower=inverse_norm(state.leading_lower),
        inv_norm_upper=inverse_norm(state.upper),
        errors=errors,
        projection=projection,
        vtilde_gap=gap,
    )
