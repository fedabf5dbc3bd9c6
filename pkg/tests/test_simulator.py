"""Tests for the Monte Carlo harness."""

import numpy as np
import pytest

from rangeloc import simulator
from rangeloc.config import ExperimentConfig
from rangeloc.core import GaussianNoise, SelectiveGaussianNoise, generate_scenario
from rangeloc.errors import ConfigError, NumericalFailure, ValidationError
from rangeloc.simulator import (
    PRESETS,
    ExperimentReport,
    ReportRow,
    aggregate,
    localize,
    ordering_inversions,
    preset,
    run_experiment,
    run_once,
)


def _make_config(**overrides) -> ExperimentConfig:
    data = {
        "name": "tiny",
        "noise_grid": [{"kind": "gaussian", "sigma": 0.0}],
        "algorithms": ["slnn", "srls"],
        "runs": 2,
        "seed": 7,
        **overrides,
    }
    return ExperimentConfig.model_validate(data)


def _make_row(algorithm: str, level: float, rmse_all: float | None) -> ReportRow:
    return ReportRow(algorithm=algorithm, noise=f"gaussian sigma={level:g}", level=level,
                     runs=10, n_tight=10, rmse_all=rmse_all, rmse_tight=rmse_all)


def _make_report(rows: list[ReportRow]) -> ExperimentReport:
    return ExperimentReport(name="r", seed=0, m=5, n=2, runs=10,
                            algorithms=sorted({r.algorithm for r in rows}), rows=rows)


class TestLocalize:
    def test_dispatch(self):
        s = generate_scenario(5, 2, 10.0, GaussianNoise(sigma=0.0), seed=1)
        res = localize("srls", s.anchors, s.measured_ranges)
        np.testing.assert_allclose(res.position, s.source, atol=1e-6)
        assert res.algorithm == "srls"

    def test_unknown_algorithm(self):
        s = generate_scenario(5, 2, 10.0, GaussianNoise(sigma=0.0), seed=1)
        with pytest.raises(ValidationError, match="unknown algorithm"):
            localize("sdr", s.anchors, s.measured_ranges)

    def test_every_algorithm_registered(self):
        assert set(simulator.SOLVERS) == {"slcp", "slnn", "sll1-ad", "sll1-md", "sll1-sd", "srls"}


class TestRunExperiment:
    def test_noiseless_rows(self):
        report = run_experiment(_make_config())
        assert len(report.rows) == 2
        for algorithm in ("slnn", "srls"):
            row = report.row(algorithm, 0.0)
            assert row.runs == 2
            assert row.failure_count == 0
            assert row.rmse_all <= 1e-4
            assert row.n_tight == 2

    def test_deterministic(self):
        config = _make_config(noise_grid=[{"kind": "gaussian", "sigma": 0.1}])
        assert run_experiment(config).canonical_json() == run_experiment(config).canonical_json()

    def test_canonical_json_has_no_timing(self):
        assert "mean_solve_time" not in run_experiment(_make_config()).canonical_json()

    def test_failures_are_recorded(self, monkeypatch):
        def broken(anchors, ranges, settings):
            raise NumericalFailure("backend gave up")

        monkeypatch.setitem(simulator.SOLVERS, "slnn", broken)
        report = run_experiment(_make_config())
        row = report.row("slnn", 0.0)
        assert row.failure_count == 2
        assert row.rmse_all is None
        assert row.mean_ml_cost is None
        assert report.row("srls", 0.0).failure_count == 0
        assert report.failure_count == 2

    def test_scenarios_are_paired(self):
        config = _make_config(noise_grid=[{"kind": "gaussian", "sigma": 0.05}])
        outcome = run_once(config, 0, 1)
        scenario = generate_scenario(5, 2, 10.0, GaussianNoise(sigma=0.05), seed=7, run_index=1)
        np.testing.assert_array_equal(outcome.truth, scenario.source)
        assert set(outcome.results) == {"slnn", "srls"}
        assert outcome.results["slnn"].relaxation_matrix.size == 0

    def test_order_independent(self):
        config = _make_config(noise_grid=[{"kind": "gaussian", "sigma": 0.1},
                                          {"kind": "gaussian", "sigma": 1.0}])
        outcomes = [run_once(config, k, i) for k in range(2) for i in range(2)]
        forward = aggregate(config, outcomes).canonical_json()
        backward = aggregate(config, list(reversed(outcomes))).canonical_json()
        assert forward == backward

    def test_process_pool_matches_serial(self):
        config = _make_config(noise_grid=[{"kind": "gaussian", "sigma": 0.1}], runs=3)
        serial = run_experiment(config, jobs=1).canonical_json()
        pooled = run_experiment(config, jobs=2).canonical_json()
        assert serial == pooled

    def test_selective_noise_runs(self):
        config = _make_config(
            noise_grid=[SelectiveGaussianNoise(sigma_base=0.04, sigma_outlier=0.5)],
            algorithms=["sll1-ad"],
        )
        row = run_experiment(config).rows[0]
        assert row.level == 0.5
        assert row.mean_iterations >= 1

    def test_mixed_models_at_one_level(self):
        config = _make_config(
            noise_grid=[{"kind": "gaussian", "sigma": 0.5}, {"kind": "laplacian", "sigma": 0.5}],
            algorithms=["srls"],
            runs=1,
        )
        report = run_experiment(config)
        assert report.noise_points == ["gaussian sigma=0.5", "laplacian sigma=0.5"]
        assert report.row("srls", "gaussian sigma=0.5") is report.rows[0]
        assert report.row("srls", "laplacian sigma=0.5") is report.rows[1]
        with pytest.raises(KeyError, match="several noise models"):
            report.row("srls", 0.5)
        assert ordering_inversions(report, "srls", "srls") == 0


class TestReport:
    def test_row_lookup(self):
        report = _make_report([_make_row("slnn", 0.1, 0.2)])
        assert report.row("slnn", 0.1).rmse_all == 0.2
        with pytest.raises(KeyError):
            report.row("slnn", 1.0)

    def test_counts_bounded_by_runs(self):
        with pytest.raises(ValueError):
            ReportRow(algorithm="slnn", noise="x", level=0.1, runs=2, n_tight=3)

    def test_ordering_inversions(self):
        rows = [
            _make_row("slnn", 0.1, 0.1), _make_row("srls", 0.1, 0.2),
            _make_row("slnn", 1.0, 0.9), _make_row("srls", 1.0, 0.8),
            _make_row("slnn", 2.0, None), _make_row("srls", 2.0, 1.0),
        ]
        report = _make_report(rows)
        assert report.levels == [0.1, 1.0, 2.0]
        assert ordering_inversions(report, "slnn", "srls") == 2


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_validate(self, name):
        config = preset(name)
        assert config.m == 5
        assert config.box_half_width == 10.0
        assert not config.settings.refine.enabled

    def test_table3_is_slcp_only(self):
        config = preset("table3")
        assert config.algorithms == ["slcp"]
        assert config.runs == 1000
        assert [n.level for n in config.noise_grid] == [1e-3, 1e-2, 1e-1, 1.0]

    def test_spatial_presets(self):
        assert preset("table6a").n == 3
        assert "slcp" not in preset("table5").algorithms

    def test_overrides(self):
        assert preset("table4", runs=3, seed=11).runs == 3

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("table9")

    def test_invalid_override(self):
        with pytest.raises(ConfigError):
            preset("table4", n=3)
