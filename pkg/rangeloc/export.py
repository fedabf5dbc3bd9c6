"""Report export to JSON, CSV and text-table formats.

Provides the output formats of the harness and the hull tracer:
- JSON: canonical report document (no wall-clock timing)
- CSV: one row per (noise point, algorithm), frozen column order
- timing CSV: mean solve time per row
- text table: RMSE per noise level and algorithm for the terminal
- hull / samples CSV: traced boundary and sampled points for plotting
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Sequence
from typing import Any

import numpy as np

from rangeloc.analysis import HullTrace
from rangeloc.core import LocalizationResult
from rangeloc.simulator import ExperimentReport

logger = logging.getLogger(__name__)

REPORT_FIELDS: tuple[str, ...] = (
    "algorithm",
    "noise",
    "level",
    "runs",
    "n_tight",
    "rmse_all",
    "rmse_tight",
    "mean_iterations",
    "mean_ml_cost",
    "failure_count",
)
TIMING_FIELDS: tuple[str, ...] = ("algorithm", "noise", "level", "mean_solve_time")
HULL_FIELDS: tuple[str, ...] = ("beta", "u", "v", "gap", "conjectural")
SAMPLE_FIELDS: tuple[str, ...] = ("u", "v")


def export_json(report: ExperimentReport, indent: int = 2) -> str:
    """Export report as its canonical JSON string."""
    return report.canonical_json(indent=indent)


def export_dict(report: ExperimentReport) -> dict[str, Any]:
    """Export report as a Python dict (JSON-serializable), timing included."""
    return report.model_dump(mode="json")


def export_csv(report: ExperimentReport) -> str:
    """One line per row in ``REPORT_FIELDS`` order; missing RMSE values are empty."""
    rows = [[_cell(getattr(r, f)) for f in REPORT_FIELDS] for r in report.rows]
    return _write_csv(REPORT_FIELDS, rows)


def export_timing_csv(report: ExperimentReport) -> str:
    rows = [[_cell(getattr(r, f)) for f in TIMING_FIELDS] for r in report.rows]
    return _write_csv(TIMING_FIELDS, rows)


def export_table(report: ExperimentReport, timing: bool = True) -> str:
    """Fixed-width table: one line per noise point, RMSE (tight count) per algorithm."""
    width = max(14, *(len(a) + 2 for a in report.algorithms))
    labels = report.noise_points
    lead = max(10, *(len(label) for label in labels))
    header = f"{'noise':<{lead}}" + "".join(f"{a:>{width}}" for a in report.algorithms)
    lines = [
        f"# {report.name}: m={report.m} n={report.n} runs={report.runs} seed={report.seed}",
        header,
        "-" * len(header),
    ]
    for label in labels:
        cells = []
        for algorithm in report.algorithms:
            row = report.row(algorithm, label)
            rmse = "-" if row.rmse_all is None else f"{row.rmse_all:.4f}"
            cells.append(f"{rmse + f' ({row.n_tight})':>{width}}")
        lines.append(f"{label:<{lead}}" + "".join(cells))
    if timing:
        lines.append("")
        lines.append("mean solve time [s]")
        for label in labels:
            times = [report.row(a, label).mean_solve_time for a in report.algorithms]
            lines.append(f"{label:<{lead}}" + "".join(f"{t:>{width}.4f}" for t in times))
    failures = report.failure_count
    if failures:
        lines.append(f"\n{failures} failed run(s)")
    return "\n".join(lines)


# ── Geometry output ───────────────────────────────────────────────────


def export_hull_csv(trace: HullTrace) -> str:
    """Rows (β, u, v, gap, conjectural); gap is 1 where a flat stretch starts."""
    gap_starts = {beta for beta, _ in trace.gaps}
    conjectural = int(trace.conjectural)
    rows = [
        [_cell(float(beta)), _cell(float(u)), _cell(float(v)),
         int(float(beta) in gap_starts), conjectural]
        for beta, (u, v) in zip(trace.betas, trace.points, strict=True)
    ]
    return _write_csv(HULL_FIELDS, rows)


def export_samples_csv(points: np.ndarray) -> str:
    rows = [[_cell(float(u)), _cell(float(v))] for u, v in np.asarray(points).reshape(-1, 2)]
    return _write_csv(SAMPLE_FIELDS, rows)


def export_result(result: LocalizationResult) -> dict[str, Any]:
    """Position and diagnostics of a single localization, as printed by the CLI."""
    data = result.to_dict()
    data["solve_time"] = result.solve_time
    if result.cost_history:
        data["cost_history"] = list(result.cost_history)
    return data


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return value


def _write_csv(fields: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    writer.writerows(rows)
    return buf.getvalue()
