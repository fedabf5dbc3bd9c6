"""Monte Carlo harness: runs algorithms over random scenarios and tabulates RMSE.

Every run draws one scenario per noise point from the stream derived from
(seed, run_index); all selected algorithms localize that same scenario, so
columns of a report are paired comparisons. Runs can be spread across a
process pool; aggregation sorts by run index, so the report does not
depend on completion order.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from rangeloc.analysis import tightness_stats
from rangeloc.baseline import solve_srls
from rangeloc.config import AlgorithmSettings, ExperimentConfig
from rangeloc.core import (
    AnchorSet,
    GaussianNoise,
    LaplacianNoise,
    LocalizationResult,
    RangeVector,
    SelectiveGaussianNoise,
    SolverStatus,
    generate_scenario,
    ml_cost,
)
from rangeloc.errors import ConfigError, RangelocError, RangelocWarning, ValidationError
from rangeloc.sll1 import sll1_ad, sll1_md, sll1_sd
from rangeloc.slcp import solve_slcp
from rangeloc.slnn import solve_slnn

logger = logging.getLogger(__name__)

Solver = Callable[[AnchorSet, RangeVector, AlgorithmSettings], LocalizationResult]

SOLVERS: dict[str, Solver] = {
    "slcp": solve_slcp,
    "slnn": solve_slnn,
    "sll1-ad": sll1_ad,
    "sll1-md": sll1_md,
    "sll1-sd": sll1_sd,
    "srls": solve_srls,
}


def localize(
    algorithm: str,
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
) -> LocalizationResult:
    """Run one named algorithm on one instance.

    Raises:
        ValidationError: unknown algorithm name or invalid instance.
        SdpError: the conic backend failed.
    """
    try:
        solver = SOLVERS[algorithm]
    except KeyError:
        raise ValidationError(
            f"unknown algorithm '{algorithm}', expected one of {', '.join(SOLVERS)}"
        ) from None
    return solver(anchors, ranges, settings or AlgorithmSettings())


# ── Report models ─────────────────────────────────────────────────────


class ReportRow(BaseModel):
    """Aggregate of one algorithm at one noise point.

    RMSE fields are ``None`` when no run qualifies (all failed, or no tight run).
    """

    model_config = ConfigDict(frozen=True)

    algorithm: str
    noise: str
    level: float
    runs: int = Field(ge=1)
    n_tight: int = Field(ge=0)
    rmse_all: float | None = Field(default=None, ge=0)
    rmse_tight: float | None = Field(default=None, ge=0)
    mean_iterations: float = Field(default=0.0, ge=0)
    mean_ml_cost: float | None = None
    failure_count: int = Field(default=0, ge=0)
    mean_solve_time: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _counts(self) -> ReportRow:
        if self.n_tight > self.runs or self.failure_count > self.runs:
            raise ValueError("counts cannot exceed runs")
        return self


class ExperimentReport(BaseModel):
    """Rows per (noise point, algorithm), noise points in grid order."""

    model_config = ConfigDict(frozen=True)

    name: str
    seed: int
    m: int
    n: int
    runs: int
    algorithms: list[str]
    rows: list[ReportRow]

    def row(self, algorithm: str, noise: str | float) -> ReportRow:
        """Row of ``algorithm`` at a noise point given by label or, if unambiguous, level."""
        if isinstance(noise, str):
            matches = [r for r in self.rows if r.algorithm == algorithm and r.noise == noise]
        else:
            matches = [r for r in self.rows if r.algorithm == algorithm and r.level == noise]
            if len({r.noise for r in matches}) > 1:
                raise KeyError(f"level {noise:g} matches several noise models, use a label")
        if not matches:
            raise KeyError(f"no row for {algorithm} at {noise}")
        return matches[0]

    def column(self, algorithm: str) -> list[ReportRow]:
        return [r for r in self.rows if r.algorithm == algorithm]

    @property
    def noise_points(self) -> list[str]:
        """Noise labels in grid order."""
        return list(dict.fromkeys(r.noise for r in self.rows))

    @property
    def levels(self) -> list[float]:
        return list(dict.fromkeys(r.level for r in self.rows))

    @property
    def failure_count(self) -> int:
        return sum(r.failure_count for r in self.rows)

    def canonical_json(self, indent: int = 2) -> str:
        """JSON without wall-clock timing; identical runs give identical bytes."""
        return self.model_dump_json(
            indent=indent, exclude={"rows": {"__all__": {"mean_solve_time"}}}
        )


# ── Runs ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RunOutcome:
    noise_index: int
    run_index: int
    truth: np.ndarray
    results: dict[str, LocalizationResult]
    costs: dict[str, float]


def run_settings(config: ExperimentConfig) -> AlgorithmSettings:
    """Algorithm settings with the experiment's box size pushed into SL-ℓ1."""
    return config.settings.model_copy(update={"sll1": config.sll1_settings()})


def _strip(result: LocalizationResult) -> LocalizationResult:
    return replace(result, relaxation_matrix=np.zeros((0, 0)))


def run_once(config: ExperimentConfig, noise_index: int, run_index: int) -> RunOutcome:
    """Localize one scenario with every selected algorithm.

    Failures are recorded per algorithm; relaxation warnings are silenced
    here because the report already counts tight runs.
    """
    noise = config.noise_grid[noise_index]
    settings = run_settings(config)
    results: dict[str, LocalizationResult] = {}
    costs: dict[str, float] = {}
    try:
        scenario = generate_scenario(
            config.m, config.n, config.box_half_width, noise, config.seed, run_index
        )
    except RangelocError as e:
        logger.warning("Run %d (%s): scenario generation failed: %s", run_index, noise.label, e)
        failed = {a: LocalizationResult.failed(a, config.n) for a in config.algorithms}
        return RunOutcome(noise_index, run_index, np.full(config.n, np.nan), failed, {})

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RangelocWarning)
        for algorithm in config.algorithms:
            try:
                result = localize(
                    algorithm, scenario.anchors, scenario.measured_ranges, settings
                )
            except RangelocError as e:
                logger.warning("Run %d (%s) %s failed: %s", run_index, noise.label, algorithm, e)
                results[algorithm] = LocalizationResult.failed(algorithm, config.n)
                continue
            results[algorithm] = _strip(result)
            costs[algorithm] = ml_cost(
                result.position, scenario.anchors, scenario.measured_ranges
            )
    logger.debug("Run %d (%s) done", run_index, noise.label)
    return RunOutcome(noise_index, run_index, scenario.source, results, costs)


def _outcomes(config: ExperimentConfig, jobs: int) -> list[RunOutcome]:
    tasks = [(k, i) for k in range(len(config.noise_grid)) for i in range(config.runs)]
    if jobs <= 1:
        return [run_once(config, k, i) for k, i in tasks]
    out: list[RunOutcome] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_once, config, k, i) for k, i in tasks]
        for future in as_completed(futures):
            out.append(future.result())
    return out


def _threshold(algorithm: str, settings: AlgorithmSettings) -> float:
    if algorithm == "slcp":
        return settings.slcp.tightness_threshold
    return settings.slnn.tightness_threshold


def aggregate(config: ExperimentConfig, outcomes: Iterable[RunOutcome]) -> ExperimentReport:
    """Fold run outcomes into report rows, independent of their order."""
    ordered = sorted(outcomes, key=lambda o: (o.noise_index, o.run_index))
    rows: list[ReportRow] = []
    for k, noise in enumerate(config.noise_grid):
        batch = [o for o in ordered if o.noise_index == k]
        if not batch:
            continue
        truths = [o.truth for o in batch]
        for algorithm in config.algorithms:
            results = [o.results[algorithm] for o in batch]
            stats = tightness_stats(results, truths, _threshold(algorithm, config.settings))
            ok = [r for r in results if r.solver_status != SolverStatus.FAILED]
            costs = [o.costs[algorithm] for o in batch if algorithm in o.costs]
            rows.append(
                ReportRow(
                    algorithm=algorithm,
                    noise=noise.label,
                    level=noise.level,
                    runs=len(results),
                    n_tight=stats.n_tight,
                    rmse_all=stats.rmse_all,
                    rmse_tight=stats.rmse_tight,
                    mean_iterations=float(np.mean([r.iterations for r in ok])) if ok else 0.0,
                    mean_ml_cost=float(np.mean(costs)) if costs else None,
                    failure_count=len(results) - len(ok),
                    mean_solve_time=float(np.mean([r.solve_time for r in ok])) if ok else 0.0,
                )
            )
    return ExperimentReport(
        name=config.name,
        seed=config.seed,
        m=config.m,
        n=config.n,
        runs=config.runs,
        algorithms=list(config.algorithms),
        rows=rows,
    )


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Run every (noise point, run) of ``config`` and aggregate the results.

    Args:
        config: Validated experiment configuration.
        jobs: Worker processes; 1 runs in-process.

    Returns:
        ExperimentReport with one row per (noise point, algorithm).
    """
    logger.info(
        "Experiment '%s': %d noise point(s) x %d run(s), algorithms %s, jobs=%d",
        config.name, len(config.noise_grid), config.runs, ",".join(config.algorithms), jobs,
    )
    report = aggregate(config, _outcomes(config, jobs))
    logger.info(
        "Experiment '%s' finished: %d row(s), %d failure(s)",
        report.name, len(report.rows), report.failure_count,
    )
    return report


def ordering_inversions(report: ExperimentReport, better: str, worse: str) -> int:
    """Noise points where ``better`` has a higher total RMSE than ``worse``.

    Points where either side has no RMSE count as inversions.
    """
    inversions = 0
    for label in report.noise_points:
        a = report.row(better, label).rmse_all
        b = report.row(worse, label).rmse_all
        if a is None or b is None or a > b:
            inversions += 1
    return inversions


# ── Presets ───────────────────────────────────────────────────────────

_GAUSSIAN_SIGMAS = (1e-3, 1e-2, 1e-1, 1.0)
_SELECTIVE_BASE = 0.04


def _gaussian() -> list[GaussianNoise]:
    return [GaussianNoise(sigma=s) for s in _GAUSSIAN_SIGMAS]


def _laplacian(*sigmas: float) -> list[LaplacianNoise]:
    return [LaplacianNoise(sigma=s) for s in sigmas]


def _selective(*outliers: float) -> list[SelectiveGaussianNoise]:
    return [SelectiveGaussianNoise(sigma_base=_SELECTIVE_BASE, sigma_outlier=s) for s in outliers]


_PLANAR = ["srls", "slcp", "slnn", "sll1-ad"]
_SPATIAL = ["srls", "slnn", "sll1-ad", "sll1-md", "sll1-sd"]

PRESETS: dict[str, dict] = {
    "table3": {"n": 2, "noise_grid": _gaussian(), "algorithms": ["slcp"], "runs": 1000},
    "table4": {"n": 2, "noise_grid": _gaussian(), "algorithms": _PLANAR},
    "table5": {"n": 3, "noise_grid": _gaussian(), "algorithms": _SPATIAL},
    "table5a": {"n": 2, "noise_grid": _laplacian(0.2, 0.4, 0.8), "algorithms": _PLANAR},
    "table5b": {"n": 2, "noise_grid": _selective(0.5, 1.0, 1.5), "algorithms": _PLANAR},
    "table6a": {"n": 3, "noise_grid": _laplacian(0.25, 0.5, 0.75), "algorithms": _SPATIAL},
    "table6b": {"n": 3, "noise_grid": _selective(0.3, 0.6, 0.9), "algorithms": _SPATIAL},
}


def preset(name: str, **overrides) -> ExperimentConfig:
    """Experiment configuration for a named accuracy table.

    All presets use five anchors in a ±10 box and 200 runs unless stated
    otherwise, and score the raw relaxed estimates with the local polish off;
    ``overrides`` replace any field.

    Raises:
        ConfigError: unknown preset or invalid override.
    """
    try:
        fields = PRESETS[name]
    except KeyError:
        expected = ", ".join(PRESETS)
        raise ConfigError(f"unknown preset '{name}', expected one of {expected}") from None
    data = {
        "name": name, "m": 5, "box_half_width": 10.0, "runs": 200,
        "settings": {"refine": {"enabled": False}}, **fields, **overrides,
    }
    try:
        return ExperimentConfig.model_validate(data)
    except ValueError as e:
        raise ConfigError(f"preset '{name}': {e}") from e
