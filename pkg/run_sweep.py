#!/usr/bin/env python3
"""
Compare reorthogonalization strategies over a manifest of matrix pairs.
"""

import argparse
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from jbdlab.config import settings
from jbdlab.core import ReorthKind
from jbdlab.experiment import ExperimentConfig, run_experiment
from jbdlab.utils import to_jsonable

logging.basicConfig(
    level=logging.WARNING,
    format="%(asctime)s - %(levelname)s - %(message)s"
)


def resolve_manifest_path(manifest_arg: Path) -> Path:
    """Resolve the manifest path with a fallback to the evaluation directory."""
    candidates = []

    if manifest_arg.is_absolute():
        candidates.append(manifest_arg)
    else:
        candidates.append((Path.cwd() / manifest_arg).resolve())
        candidates.append((Path.cwd() / "evaluation" / manifest_arg).resolve())

    for candidate in candidates:
        if candidate.exists():
            return candidate

    searched = "\n".join(str(path) for path in candidates)
    raise FileNotFoundError(
        "Manifest file not found. Checked:\n"
        f"{searched}\n\n"
        "Try either:\n"
        "  python run_sweep.py evaluation/manifest.example.json\n"
        "or:\n"
        "  python run_sweep.py manifest.example.json"
    )


def resolve_path(manifest_path: Path, value: str) -> Path:
    """Resolve a manifest-relative path."""
    path = Path(value)
    if path.is_absolute():
        return path
    return (manifest_path.parent / path).resolve()


def load_manifest(manifest_path: Path) -> list[dict]:
    """Load and validate the sweep manifest."""
    if not manifest_path.exists():
        raise FileNotFoundError(f"Manifest file not found: {manifest_path}")
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError("Manifest must be a JSON array of pair definitions")
    for entry in payload:
        if "pair" not in entry and "matrix_a" not in entry:
            raise ValueError(
                f"Manifest entry '{entry.get('name', 'unknown')}' needs 'pair' or 'matrix_a'"
            )
    return payload


def entry_settings(entry: dict, manifest_path: Path) -> Optional[dict]:
    """
    Turn a manifest entry into ExperimentConfig fields.

    Returns None when a referenced matrix file is missing, so the entry is
    skipped rather than failing the sweep.
    """
    fields = {key: entry[key] for key in ("pair", "size", "max_steps", "tol", "want", "which") if key in entry}
    if "matrix_a" in entry:
        matrix_a = resolve_path(manifest_path, entry["matrix_a"])
        matrix_l = entry.get("matrix_l", "@first-derivative")
        if not matrix_l.startswith("@"):
            matrix_l = str(resolve_path(manifest_path, matrix_l))
            if not Path(matrix_l).exists():
                return None
        if not matrix_a.exists():
            return None
        fields.update(matrix_a=str(matrix_a), matrix_l=matrix_l, swap=entry.get("swap", "auto"))
    return fields


def run_one(config_fields: dict) -> dict:
    """Run a single experiment in a worker and return a flat result record."""
    cfg = ExperimentConfig(**config_fields)
    started = time.perf_counter()
    result = run_experiment(cfg)
    elapsed = time.perf_counter() - started

    record = {
        "name": config_fields.get("name_label"),
        "strategy": cfg.reorth.value,
        "exit_code": result.exit_code,
        "elapsed_seconds": elapsed,
        "out_dir": str(result.out_dir),
        "error": result.error,
    }
    if result.exit_code == 0:
        summary = result.summary
        top = summary["pairs"][0] if summary["pairs"] else {}
        record.update(
            {
                "steps": summary["steps"],
                "termination_reason": summary["termination_reason"],
                "c": top.get("c"),
                "s": top.get("s"),
                "residual_bound": top.get("residual_bound"),
                "angle_error": top.get("angle_error"),
                "verifiers_hold": summary["verifiers_hold"],
                "max_inv_norm_Bhat": summary["max_inv_norm_Bhat"],
            }
        )
    return record


def print_results(results: list[dict]) -> None:
    """Print per-run and per-strategy summaries."""
    print("\nPer-run results")
    print("-" * 100)
    print(
        f"{'Strategy':<10} {'Pair':<22} {'Steps':>6} {'Reason':<10} "
        f"{'c':>20} {'Bound':>10} {'Angle':>10} {'Time':>8}"
    )
    print("-" * 100)
    for item in results:
        if item["exit_code"] != 0:
            print(f"{item['strategy']:<10} {item['name']:<22} FAILED (exit {item['exit_code']}): {item['error']}")
            continue
        angle = item.get("angle_error")
        angle_text = "-" if angle is None else f"{angle:.2e}"
        print(
            f"{item['strategy']:<10} {item['name']:<22} {item['steps']:>6} "
            f"{item['termination_reason']:<10} {item['c']:>20.16f} "
            f"{item['residual_bound']:>10.2e} {angle_text:>10} {item['elapsed_seconds']:>7.2f}s"
        )

    print("\nStrategy summary")
    print("-" * 72)
    for strategy in sorted({item["strategy"] for item in results}):
        items = [item for item in results if item["strategy"] == strategy and item["exit_code"] == 0]
        if not items:
            print(f"{strategy:<10} no successful runs")
            continue
        average_steps = sum(item["steps"] for item in items) / len(items)
        average_time = sum(item["elapsed_seconds"] for item in items) / len(items)
        holding = sum(1 for item in items if item["verifiers_hold"])
        print(
            f"{strategy:<10} avg_steps={average_steps:>7.1f} "
            f"avg_time={average_time:>6.2f}s verifiers_hold={holding}/{len(items)}"
        )


def main() -> None:
    parser = argparse.ArgumentParser(
        description="Compare reorthogonalization strategies of the joint bidiagonalization",
    )
    parser.add_argument(
        "manifest",
        type=Path,
        help="Path to a JSON manifest of matrix pairs",
    )
    parser.add_argument(
        "--strategies",
        nargs="+",
        default=[ReorthKind.NONE.value, ReorthKind.FULL.value],
        choices=[kind.value for kind in ReorthKind],
        help="Reorthogonalization strategies to compare",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(settings.out_dir) / "sweep",
        help="Base output directory; each run gets its own subdirectory (default: %(default)s)",
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="Number of worker processes (default: %(default)s)",
    )
    parser.add_argument(
        "--json-output",
        type=Path,
        help="Optional path to write raw sweep results as JSON",
    )
    args = parser.parse_args()

    manifest_path = resolve_manifest_path(args.manifest)
    entries = load_manifest(manifest_path)

    runs = []
    for index, entry in enumerate(entries, start=1):
        name = entry.get("name", f"entry{index}")
        fields = entry_settings(entry, manifest_path)
        if fields is None:
            print(f"Skipping '{name}': matrix file not found", flush=True)
            continue
        for strategy in args.strategies:
            runs.append(
                {
                    **fields,
                    "reorth": strategy,
                    "out": str(args.out / name / strategy),
                    "name_label": name,
                }
            )

    print(
        f"Running {len(runs)} experiment(s) over {len(args.strategies)} strategy(ies) "
        f"with {args.jobs} worker(s).",
        flush=True,
    )

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, runs))
    else:
        results = []
        for number, run in enumerate(runs, start=1):
            print(f"[{run['reorth']}] run {number}/{len(runs)}: {run['name_label']}", flush=True)
            results.append(run_one(run))

    print_results(results)

    if args.json_output:
        args.json_output.write_text(
            json.dumps(to_jsonable(results), indent=2),
            encoding="utf-8",
        )


if __name__ == "__main__":
    main()
