"""
Configuration management for jbdlab

This module holds the tunable constants of the joint bidiagonalization
library and the experiment runner. All settings can be overridden via
environment variables.
"""

from typing import Literal

import numpy as np
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

EPS = float(np.finfo(np.float64).eps)


class Settings(BaseSettings):
    """
    Library settings with defaults tuned for desk-scale experiments.

    All settings can be overridden via environment variables with JBD_ prefix.
    """

    model_config = SettingsConfigDict(
        env_prefix="JBD_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Output
    out_dir: str = Field(
        default="results",
        description="Default output directory for experiment artifacts"
    )

    log_level: str = Field(
        default="INFO",
        description="Root log level used by the command-line entry points"
    )

    # Inner least squares solver
    reference_max_columns: int = Field(
        default=2048,
        description="Largest column count for which the dense-QR projector is the default"
    )

    lsqr_atol: float = Field(
        default=100 * EPS,
        description="LSQR absolute tolerance on the normal-equations residual"
    )

    lsqr_btol: float = Field(
        default=100 * EPS,
        description="LSQR relative tolerance on the residual"
    )

    lsqr_max_iterations: int = Field(
        default=2000,
        description="LSQR iteration limit before NotConverged is raised"
    )

    # Lanczos estimators
    norm_estimate_iterations: int = Field(
        default=30,
        description="Lanczos bidiagonalization steps used to estimate the stacked norm"
    )

    swap_probe_iterations: int = Field(
        default=20,
        description="Lanczos steps used to estimate conditioning when ordering a pair"
    )

    # Joint bidiagonalization
    semi_denominator: Literal["2k+1", "k"] = Field(
        default="2k+1",
        description="Denominator of the semiorthogonality bar sqrt(delta / denominator)"
    )

    coupling_gap_warn: float = Field(
        default=1e-8,
        description="Relative gap between measured and coupled beta_hat that is logged"
    )

    debug_checks: bool = Field(
        default=False,
        description="Run interlacing and dense-defect cross-checks on every step"
    )

    # Diagnostics
    diag_stride: int = Field(
        default=5,
        description="Sample recurrence diagnostics every this many steps"
    )

    ghost_radius: float = Field(
        default=1e-6,
        description="Radius used to cluster Ritz values when counting copies"
    )

    small_factor: float = Field(
        default=100.0,
        description="Multiple of machine epsilon used for O(eps) verifier slack"
    )

    basis_factor: float = Field(
        default=1000.0,
        description="Multiple of machine epsilon used for basis-level and tail allowances"
    )

    plot_bound_factor: float = Field(
        default=10.0,
        description="Multiple of ||inv(B)|| * eps drawn as the estimated error bound"
    )

    projection_relative_slack: float = Field(
        default=1e-8,
        description="Relative slack when comparing the projection deviation to its bound"
    )


# Global settings instance
settings = Settings()
