"""Tests for the file-system report store."""

import pytest

from rangeloc.errors import ConfigError
from rangeloc.persistence import ReportStore
from rangeloc.simulator import ExperimentReport, ReportRow


def _make_report(name: str = "demo") -> ExperimentReport:
    rows = [
        ReportRow(algorithm="slnn", noise="gaussian sigma=0.1", level=0.1, runs=2, n_tight=2,
                  rmse_all=0.05, rmse_tight=0.05, mean_iterations=1.0, mean_solve_time=0.25),
        ReportRow(algorithm="slnn", noise="gaussian sigma=1", level=1.0, runs=2, n_tight=1,
                  rmse_all=0.5, rmse_tight=None, mean_iterations=1.0, mean_solve_time=0.5),
    ]
    return ExperimentReport(name=name, seed=0, m=5, n=2, runs=2, algorithms=["slnn"], rows=rows)


class TestReportStore:
    def test_save_writes_three_files(self, tmp_path):
        store = ReportStore(tmp_path / "out")
        path = store.save(_make_report())
        assert path == tmp_path / "out" / "demo.json"
        for p in store.paths("demo"):
            assert p.exists()

    def test_load_round_trip_with_timing(self, tmp_path):
        store = ReportStore(tmp_path)
        report = _make_report()
        store.save(report)
        loaded = store.load("demo")
        assert loaded == report
        assert loaded.row("slnn", 1.0).mean_solve_time == 0.5

    def test_load_without_timing_file(self, tmp_path):
        store = ReportStore(tmp_path)
        store.save(_make_report())
        store.paths("demo")[2].unlink()
        assert store.load("demo").row("slnn", 0.1).mean_solve_time == 0.0

    def test_load_missing(self, tmp_path):
        assert ReportStore(tmp_path).load("nope") is None

    def test_load_corrupt(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"name": 1}')
        with pytest.raises(ConfigError):
            ReportStore(tmp_path).load("bad")

    def test_invalid_name(self, tmp_path):
        with pytest.raises(ConfigError):
            ReportStore(tmp_path).paths("../escape")

    def test_list_reports(self, tmp_path):
        store = ReportStore(tmp_path)
        store.save(_make_report("a"))
        store.save(_make_report("b"))
        (tmp_path / "notes.json").write_text("{}")
        names = {e["name"] for e in store.list_reports()}
        assert names == {"a", "b"}

    def test_list_missing_root(self, tmp_path):
        assert ReportStore(tmp_path / "none").list_reports() == []

    def test_delete(self, tmp_path):
        store = ReportStore(tmp_path)
        store.save(_make_report())
        assert store.delete("demo")
        assert store.load("demo") is None
        assert not store.delete("demo")

    def test_timing_follows_noise_model(self, tmp_path):
        rows = [
            ReportRow(algorithm="srls", noise="gaussian sigma=0.5", level=0.5, runs=1,
                      n_tight=1, rmse_all=0.1, rmse_tight=0.1, mean_solve_time=0.125),
            ReportRow(algorithm="srls", noise="laplacian sigma=0.5", level=0.5, runs=1,
                      n_tight=1, rmse_all=0.2, rmse_tight=0.2, mean_solve_time=0.75),
        ]
        report = ExperimentReport(name="mixed", seed=0, m=5, n=2, runs=1,
                                  algorithms=["srls"], rows=rows)
        store = ReportStore(tmp_path)
        store.save(report)
        loaded = store.load("mixed")
        assert loaded.row("srls", "gaussian sigma=0.5").mean_solve_time == 0.125
        assert loaded.row("srls", "laplacian sigma=0.5").mean_solve_time == 0.75
