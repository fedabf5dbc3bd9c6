"""Command-line entry point: ``rangeloc simulate | localize | hull``.

Exit codes: 0 on success, 2 for invalid input or configuration, 1 when a
solver fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from rangeloc import __version__
from rangeloc.analysis import sample_set_S, trace_hull
from rangeloc.config import (
    ALGORITHMS,
    AlgorithmSettings,
    ExperimentConfig,
    load_config,
    load_settings,
)
from rangeloc.core import AnchorSet, RangeVector, check_compatible, scenario_rng
from rangeloc.errors import ConfigError, RangelocError, RangelocWarning, ValidationError
from rangeloc.export import export_hull_csv, export_result, export_samples_csv, export_table
from rangeloc.persistence import ReportStore
from rangeloc.simulator import PRESETS, localize, preset, run_experiment
from rangeloc.slcp import build_slcp

logger = logging.getLogger(__name__)

_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


# ── Input files ───────────────────────────────────────────────────────


def _parse_rows(path: Path) -> list[tuple[int, list[float]]]:
    """Numeric CSV rows with their 1-based line numbers; blank and # lines skipped."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"{path}: {e.strerror}") from e
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append((lineno, [float(cell) for cell in line.split(",")]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not a row of numbers: {line!r}") from None
    if not rows:
        raise ValidationError(f"{path}: no data")
    return rows


def read_anchors(path: Path) -> AnchorSet:
    """One anchor per row, all rows with the same number of coordinates."""
    rows = _parse_rows(path)
    n = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != n:
            raise ValidationError(f"{path}:{lineno}: expected {n} coordinates, got {len(row)}")
    return AnchorSet(np.array([row for _, row in rows]))


def read_ranges(path: Path) -> RangeVector:
    """All ranges on a single row."""
    rows = _parse_rows(path)
    if len(rows) > 1:
        raise ValidationError(f"{path}:{rows[1][0]}: ranges must be on a single row")
    return RangeVector(np.array(rows[0][1]))


def _read_instance(args: argparse.Namespace) -> tuple[AnchorSet, RangeVector]:
    anchors = read_anchors(args.anchors)
    ranges = read_ranges(args.ranges)
    check_compatible(anchors, ranges)
    return anchors, ranges


# ── Commands ──────────────────────────────────────────────────────────


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else preset(args.preset)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.algos:
        overrides["algorithms"] = [a.strip() for a in args.algos.split(",") if a.strip()]
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.out is not None:
        overrides["output"] = args.out
    if not overrides:
        return config
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **overrides})
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _settings(args: argparse.Namespace) -> AlgorithmSettings:
    return load_settings(args.config) if args.config else AlgorithmSettings()


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _experiment(args)
    report = run_experiment(config, jobs=args.jobs)
    print(export_table(report))
    if config.output is not None:
        path = ReportStore(config.output).save(report)
        print(f"\nreport written to {path}")
    return 0


def cmd_localize(args: argparse.Namespace) -> int:
    anchors, ranges = _read_instance(args)
    result = localize(args.algo, anchors, ranges, _settings(args))
    print(json.dumps(export_result(result), indent=2))
    return 0


def cmd_hull(args: argparse.Namespace) -> int:
    anchors, ranges = _read_instance(args)
    data = build_slcp(anchors, ranges)
    base = _settings(args)
    analysis = base.analysis.model_copy(update={"full_hull": args.full or base.analysis.full_hull})
    settings = base.model_copy(update={"analysis": analysis})
    trace = trace_hull(data.c, data.r, args.betas, settings)
    hull_csv = export_hull_csv(trace)
    samples_csv = None
    if args.samples:
        samples = sample_set_S(data.c, data.r, args.samples, scenario_rng(args.seed))
        samples_csv = export_samples_csv(samples)

    if args.out is None:
        sys.stdout.write(hull_csv)
        if samples_csv is not None:
            sys.stdout.write("\n" + samples_csv)
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "hull.csv").write_text(hull_csv)
    if samples_csv is not None:
        (args.out / "samples.csv").write_text(samples_csv)
    print(f"{len(trace)} boundary point(s), {len(trace.gaps)} gap(s) written to {args.out}")
    return 0


# ── Parser ────────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangeloc", description="Range-based source localization by semidefinite relaxation"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="experiment JSON file")
    source.add_argument("--preset", "--table", dest="preset", choices=sorted(PRESETS),
                        help="named accuracy table")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--algos", help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    sim.add_argument("--runs", type=int)
    sim.add_argument("--out", type=Path, help="directory for the report files")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.set_defaults(func=cmd_simulate)

    loc = sub.add_parser("localize", help="localize one source from files")
    loc.add_argument("anchors", type=Path, help="CSV, one anchor per row")
    loc.add_argument("ranges", type=Path, help="CSV, all ranges on one row")
    loc.add_argument("--algo", choices=ALGORITHMS, default="slnn")
    loc.add_argument("--config", type=Path, help="algorithm settings JSON file")
    loc.set_defaults(func=cmd_localize)

    hull = sub.add_parser("hull", help="trace the relaxed image set of a planar instance")
    hull.add_argument("anchors", type=Path)
    hull.add_argument("ranges", type=Path)
    hull.add_argument("--betas", type=int, help="boundary grid size")
    hull.add_argument("--samples", type=int, default=0, help="sampled phase vectors")
    hull.add_argument("--seed", type=int, default=0)
    hull.add_argument("--full", action="store_true", help="trace all directions (conjectural)")
    hull.add_argument("--config", type=Path, help="algorithm settings JSON file")
    hull.add_argument("--out", type=Path, help="directory for hull.csv and samples.csv")
    hull.set_defaults(func=cmd_hull)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=_LEVELS[min(args.verbose, len(_LEVELS) - 1)],
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    # Already logged by the library.
    warnings.simplefilter("ignore", RangelocWarning)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RangelocError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
