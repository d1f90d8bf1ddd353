"""
CSV output.

Column order is fixed per file and the header is always written. Floats use
17 significant digits so every value reads back exactly. Files are written
to a temporary file in the target directory and moved into place.
"""

import csv
import logging
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np

from chm.engine import AggregateStats, RunRecord
from chm.oracle import GameSolution, OracleResult, Query

logger = logging.getLogger(__name__)

RUNS_FILE = "runs.csv"
SUMMARY_FILE = "summary.csv"
SWEEP_FILE = "sweep.csv"
ORACLE_FILE = "oracle.csv"
TRACE_FILE = "trace.csv"


def arm_columns(prefix: str, num_arms: int) -> List[str]:
    return [f"{prefix}{a}" for a in range(1, num_arms + 1)]


def runs_columns(num_arms: int) -> List[str]:
    return ["run_index", "seed", "decision", "correct", "tau", "fired_rule",
            "rejection_saturations"] + arm_columns("prop_arm_", num_arms)


def summary_columns(num_arms: int) -> List[str]:
    return (["config_hash", "family", "policy", "gamma_minus", "gamma_plus", "delta", "reps",
             "completed", "truncated", "mean_tau", "median_tau", "tau_se", "errors",
             "error_rate", "error_ci_low", "error_ci_high", "rejection_saturations",
             "feasible", "t_star", "lower_bound"]
            + arm_columns("prop_arm_", num_arms)
            + arm_columns("prop_se_arm_", num_arms)
            + arm_columns("w_star_", num_arms))


def oracle_columns(num_arms: int) -> List[str]:
    return (["gamma_minus", "gamma_plus", "feasible", "gamma_star", "t_star", "delta",
             "lower_bound"]
            + arm_columns("w_star_", num_arms)
            + ["brute_force_grid", "brute_force_t_star", "relative_gap"])


def trace_columns(num_arms: int) -> List[str]:
    return ["run_index", "t"] + arm_columns("n_arm_", num_arms)


def format_value(value: Any) -> str:
    """Text for one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.17g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Atomically write one CSV file; OSError propagates with the path attached."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(suffix=".csv", dir=str(path.parent))
    temp_file = Path(temp_path)
    try:
        with open(fd, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"Row has {len(row)} cells, header has {len(header)}")
                writer.writerow([format_value(v) for v in row])
        os.replace(temp_file, path)
    except Exception:
        if temp_file.exists():
            try:
                temp_file.unlink()
            except OSError:
                pass
        raise
    logger.debug(f"wrote {path}")
    return path


def run_row(index: int, record: RunRecord) -> List[Any]:
    return ([index, record.seed, record.decision, record.correct, record.tau, record.fired,
             record.rejection_saturations] + list(record.proportions))


def write_runs(path: Path, records: List[RunRecord], num_arms: int) -> Path:
    return write_csv(path, runs_columns(num_arms), (run_row(i, r) for i, r in enumerate(records)))


def summary_row(config_hash: str, family: str, policy: str, query: Query, delta: float,
                stats: AggregateStats, oracle: OracleResult, lower_bound: float) -> List[Any]:
    return ([config_hash, family, policy, query.gamma_minus, query.gamma_plus, delta,
             stats.reps, stats.completed, stats.truncated, stats.mean_tau, stats.median_tau,
             stats.tau_se, stats.errors, stats.error_rate, stats.error_ci_low,
             stats.error_ci_high, stats.rejection_saturations, oracle.feasible,
             oracle.t_star, lower_bound]
            + list(stats.mean_proportions)
            + list(stats.proportions_se)
            + list(oracle.weights))


def write_summary(path: Path, rows: List[List[Any]], num_arms: int) -> Path:
    return write_csv(path, summary_columns(num_arms), rows)


def oracle_row(query: Query, result: OracleResult, delta: float, lower_bound: float,
               grid: Optional[int] = None, solution: Optional[GameSolution] = None) -> List[Any]:
    brute_t_star = gap = None
    if solution is not None:
        brute_t_star = 1.0 / solution.value if solution.value > 0 else math.inf
        gap = abs(brute_t_star - result.t_star) / result.t_star
    return ([query.gamma_minus, query.gamma_plus, result.feasible, result.gamma_star,
             result.t_star, delta, lower_bound]
            + list(result.weights)
            + [grid, brute_t_star, gap])


def write_oracle(path: Path, rows: List[List[Any]], num_arms: int) -> Path:
    return write_csv(path, oracle_columns(num_arms), rows)


def trace_rows(records: List[RunRecord]) -> Iterable[List[Any]]:
    for index, record in enumerate(records):
        for point in record.trace:
            yield [index, point.t] + list(point.counts)


def write_trace(path: Path, records: List[RunRecord], num_arms: int) -> Path:
    return write_csv(path, trace_columns(num_arms), trace_rows(records))
