"""Adaptive isogeometric analysis on trimmed domains: benchmark runner bindings."""

import csv
from pathlib import Path

from ._trimiga import (
    TrimigaError,
    benchmark_names,
    bspline_basis,
    default_config,
    fitted_slope,
    run_benchmark,
    validate_config,
)

__all__ = [
    "TrimigaError",
    "benchmark_names",
    "bspline_basis",
    "default_config",
    "fitted_slope",
    "load_history",
    "run",
    "run_benchmark",
    "validate_config",
]


def run(problem, out, **options):
    """Keyword front end to run_benchmark; option names follow the config keys."""
    cfg = {"problem": problem, "out": str(out), **options}
    return run_benchmark(cfg)


def load_history(path):
    """Rows of a history.csv as dicts with numeric values."""
    rows = []
    with open(Path(path), newline="") as f:
        for r in csv.DictReader(f):
            rows.append({k: (float(v) if k in ("error_norm", "eta_total") else int(v)) for k, v in r.items()})
    return rows
