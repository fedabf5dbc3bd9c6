"""File-system persistence for experiment reports.

Each report is stored under the store root as three files sharing the
report name: ``<name>.json`` (canonical report), ``<name>.csv`` (rows)
and ``<name>.timing.csv`` (mean solve times).
"""

from __future__ import annotations

import csv
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import ValidationError as PydanticValidationError

from rangeloc.errors import ConfigError
from rangeloc.export import export_csv, export_json, export_timing_csv
from rangeloc.simulator import ExperimentReport

logger = logging.getLogger(__name__)

_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


class ReportStore:
    """Directory-backed report persistence.

    Usage:
        store = ReportStore(Path("results"))
        store.save(report)
        report = store.load("table4")
    """

    def __init__(self, root: Path | str) -> None:
        self._root = Path(root)

    @property
    def root(self) -> Path:
        return self._root

    def paths(self, name: str) -> tuple[Path, Path, Path]:
        """JSON, CSV and timing CSV paths for ``name``."""
        if not _NAME.match(name):
            raise ConfigError(f"invalid report name '{name}'")
        root = self._root
        return root / f"{name}.json", root / f"{name}.csv", root / f"{name}.timing.csv"

    def save(self, report: ExperimentReport) -> Path:
        """Write all three files, replacing earlier ones. Returns the JSON path."""
        json_path, csv_path, timing_path = self.paths(report.name)
        self._root.mkdir(parents=True, exist_ok=True)
        json_path.write_text(export_json(report) + "\n")
        csv_path.write_text(export_csv(report))
        timing_path.write_text(export_timing_csv(report))
        logger.info("Saved report '%s' to %s", report.name, self._root)
        return json_path

    def load(self, name: str) -> ExperimentReport | None:
        """Load a report by name, with timings merged back when present."""
        json_path, _, timing_path = self.paths(name)
        if not json_path.exists():
            return None
        try:
            report = ExperimentReport.model_validate_json(json_path.read_text())
        except PydanticValidationError as e:
            raise ConfigError(f"{json_path}: {e}") from e
        if timing_path.exists():
            report = _with_timing(report, timing_path)
        return report

    def list_reports(self) -> list[dict[str, Any]]:
        """Stored reports (metadata only), most recently modified first."""
        if not self._root.is_dir():
            return []
        entries = []
        for path in self._root.glob("*.json"):
            try:
                report = ExperimentReport.model_validate_json(path.read_text())
            except PydanticValidationError:
                logger.debug("Skipping %s: not a report", path)
                continue
            modified = datetime.fromtimestamp(path.stat().st_mtime, tz=timezone.utc)
            entries.append({
                "name": report.name,
                "algorithms": report.algorithms,
                "runs": report.runs,
                "modified": modified.isoformat(),
            })
        return sorted(entries, key=lambda e: e["modified"], reverse=True)

    def delete(self, name: str) -> bool:
        """Delete a report by name. Returns True if anything was removed."""
        deleted = False
        for path in self.paths(name):
            if path.exists():
                path.unlink()
                deleted = True
        if deleted:
            logger.info("Deleted report '%s'", name)
        return deleted


def _with_timing(report: ExperimentReport, path: Path) -> ExperimentReport:
    with path.open(newline="") as f:
        times = {
            (row["algorithm"], row["noise"]): float(row["mean_solve_time"])
            for row in csv.DictReader(f)
        }
    rows = [
        r.model_copy(update={"mean_solve_time": times.get((r.algorithm, r.noise), 0.0)})
        for r in report.rows
    ]
    return report.model_copy(update={"rows": rows})
