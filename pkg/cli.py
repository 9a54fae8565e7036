#!/usr/bin/env python3
"""
Command-line interface for joint bidiagonalization experiments

This script runs one experiment on a builtin pair with known GSVD or on a
pair read from Matrix Market files, and writes convergence history,
diagnostics, plot data and a JSON summary to the output directory.
"""

import sys
import argparse
import logging
from pathlib import Path

from pydantic import ValidationError

from jbdlab.config import settings
from jbdlab.core import PairOrder, ReorthKind
from jbdlab.experiment import ExperimentConfig, record_failure, run_experiment
from jbdlab.extract import Which
from jbdlab.inner import ProjectionMode
from jbdlab.testgen import BUILTIN_PAIRS

# Configure logging
logging.basicConfig(
    level=settings.log_level.upper(),
    format="%(asctime)s - %(levelname)s - %(message)s"
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="GSVD of a matrix pair by joint bidiagonalization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Largest generalized singular value of the builtin pair, full reorthogonalization
  python cli.py --pair Ac_Ls --size 200 --reorth full --tol 1e-10

  # Watch ghosts appear without reorthogonalization
  python cli.py --pair example1 --size 500 --reorth none --max-steps 150

  # External matrix with a first-derivative regularization operator
  python cli.py --matrix-a well1850.mtx --matrix-l @first-derivative --swap auto

  # Iterative inner solves with a looser tolerance
  python cli.py --pair Ac_Ls --size 800 --inner-mode iterative --inner-tol 1e-12
        """
    )

    parser.add_argument(
        "--pair",
        type=str,
        choices=list(BUILTIN_PAIRS),
        help="Builtin pair with known GSVD (default: Ac_Ls unless --matrix-a is given)"
    )
    parser.add_argument(
        "--size",
        type=int,
        default=200,
        help="Order of the builtin pair (default: %(default)s)"
    )
    parser.add_argument(
        "--matrix-a",
        type=str,
        help="Matrix Market file for A"
    )
    parser.add_argument(
        "--matrix-l",
        type=str,
        help="Matrix Market file for L, or @first-derivative / @scaled-diag"
    )
    parser.add_argument(
        "--reorth",
        type=str,
        default=ReorthKind.FULL.value,
        choices=[kind.value for kind in ReorthKind],
        help="Reorthogonalization strategy (default: %(default)s)"
    )
    parser.add_argument(
        "--semi-denominator",
        type=str,
        default=settings.semi_denominator,
        choices=["2k+1", "k"],
        help="Denominator of the semiorthogonality bar (default: %(default)s)"
    )
    parser.add_argument(
        "--max-steps",
        type=int,
        default=150,
        help="Step limit (default: %(default)s)"
    )
    parser.add_argument(
        "--tol",
        type=float,
        default=1e-10,
        help="Residual bound tolerance of the stopping rule (default: %(default)s)"
    )
    parser.add_argument(
        "--want",
        type=int,
        default=1,
        help="Number of generalized singular values wanted (default: %(default)s)"
    )
    parser.add_argument(
        "--which",
        type=str,
        default=Which.LARGEST.value,
        choices=[which.value for which in Which],
        help="End of the spectrum (default: %(default)s)"
    )
    parser.add_argument(
        "--inner-mode",
        type=str,
        choices=[mode.value for mode in ProjectionMode],
        help="Projection path: dense-QR reference or LSQR (default: by problem size)"
    )
    parser.add_argument(
        "--inner-tol",
        type=float,
        help=f"LSQR atol and btol (default: {settings.lsqr_atol:.1e})"
    )
    parser.add_argument(
        "--diag-stride",
        type=int,
        default=settings.diag_stride,
        help="Sample diagnostics every this many steps (default: %(default)s)"
    )
    parser.add_argument(
        "--out",
        type=str,
        default=settings.out_dir,
        help="Output directory (default: %(default)s, env JBD_OUT_DIR)"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed for the random start vector (default: %(default)s)"
    )
    parser.add_argument(
        "--swap",
        type=str,
        default=PairOrder.KEEP.value,
        choices=[order.value for order in PairOrder],
        help="Pair ordering (default: %(default)s)"
    )
    parser.add_argument(
        "--start",
        type=str,
        default="ones",
        choices=["ones", "random"],
        help="Starting vector (default: %(default)s)"
    )
    parser.add_argument(
        "--with-z",
        action="store_true",
        help="Also recover left vectors of L from the upper bidiagonal factor"
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging"
    )
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Build the validated experiment configuration from parsed flags."""
    return ExperimentConfig(
        pair=args.pair,
        size=args.size,
        matrix_a=args.matrix_a,
        matrix_l=args.matrix_l,
        reorth=args.reorth,
        semi_denominator=args.semi_denominator,
        max_steps=args.max_steps,
        tol=args.tol,
        want=args.want,
        which=args.which,
        inner_mode=args.inner_mode,
        inner_tol=args.inner_tol,
        diag_stride=args.diag_stride,
        out=args.out,
        seed=args.seed,
        swap=args.swap,
        start=args.start,
        with_z=args.with_z,
    )


def format_summary(summary: dict) -> str:
    """Human-readable run summary."""
    lines = [
        f"Pair: {summary['pair']} ({summary['m']}x{summary['n']}, {summary['p']}x{summary['n']})",
        f"Strategy: {summary['strategy']}  mode: {summary['mode']}  swapped: {summary['swapped']}",
        f"Steps: {summary['steps']} ({summary['termination_reason']})",
        "",
        f"{'#':>3} {'c':>22} {'s':>22} {'bound':>10} {'direct':>10}",
    ]
    for pair in summary["pairs"]:
        direct = pair.get("residual_direct")
        direct_text = "-" if direct is None else f"{direct:.2e}"
        lines.append(
            f"{pair['index']:>3} {pair['c']:>22.16e} {pair['s']:>22.16e} "
            f"{pair['residual_bound']:>10.2e} {direct_text:>10}"
        )
        if "angle_error" in pair:
            lines.append(f"    angle error vs ground truth: {pair['angle_error']:.3e}")
    return "\n".join(lines)


def main():
    """
    CLI entry point for joint bidiagonalization experiments.
    """
    parser = build_parser()
    args = parser.parse_args()

    # Set log level
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        cfg = config_from_args(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        code, _ = record_failure(Path(args.out), e)
        sys.exit(code)

    result = run_experiment(cfg)
    if result.exit_code != 0:
        logger.error(f"Run failed with exit code {result.exit_code}: {result.error}")
        sys.exit(result.exit_code)

    print("\n" + "=" * 60)
    print("GSVD APPROXIMATION")
    print("=" * 60)
    print(format_summary(result.summary))
    print("=" * 60)
    logger.info(f"Artifacts written to: {result.out_dir}")


if __name__ == "__main__":
    main()
