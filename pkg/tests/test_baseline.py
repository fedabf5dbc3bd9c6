"""Tests for the squared-range least-squares baseline."""

import numpy as np
import pytest

from rangeloc import baseline
from rangeloc.baseline import build_gtrs, multiplier_interval, solve_gtrs, solve_srls, srls
from rangeloc.config import BaselineSettings
from rangeloc.core import (
    AnchorSet,
    GaussianNoise,
    RangeVector,
    SolverStatus,
    generate_scenario,
    ml_cost,
)
from rangeloc.errors import BisectionFailure, FallbackWarning, RankDeficient


def _make_scenario(n: int = 2, m: int = 5, sigma: float = 0.0, seed: int = 0):
    return generate_scenario(m, n, 10.0, GaussianNoise(sigma=sigma), seed=seed)


class TestBuildGtrs:
    def test_shapes(self):
        s = _make_scenario(n=3, m=6)
        problem = build_gtrs(s.anchors, s.measured_ranges)
        assert problem.M.shape == (6, 4)
        assert problem.n == 3
        np.testing.assert_allclose(problem.f, [0.0, 0.0, 0.0, -0.5])

    def test_too_few_anchors(self):
        anchors = AnchorSet(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(RankDeficient):
            build_gtrs(anchors, RangeVector([1.0, 1.0]))

    def test_collinear_anchors(self):
        anchors = AnchorSet(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [5.0, 0.0]]))
        with pytest.raises(RankDeficient):
            build_gtrs(anchors, RangeVector([1.0, 1.0, 1.0, 1.0]))


class TestMultiplier:
    def test_bracket_signs(self):
        s = _make_scenario(sigma=0.1, seed=1)
        problem = build_gtrs(s.anchors, s.measured_ranges)
        lo, hi = multiplier_interval(problem, BaselineSettings())
        assert lo < hi
        assert problem.phi(lo) > 0 > problem.phi(hi)

    def test_solution_satisfies_constraint(self):
        s = _make_scenario(sigma=0.1, seed=2)
        problem = build_gtrs(s.anchors, s.measured_ranges)
        y = solve_gtrs(problem, BaselineSettings())
        assert problem.constraint(y) == pytest.approx(0.0, abs=1e-6)
        assert y[-1] == pytest.approx(y[:-1] @ y[:-1], rel=1e-6)


class TestSolveSrls:
    @pytest.mark.parametrize("n", [2, 3])
    def test_noiseless_exact(self, n):
        s = _make_scenario(n=n, seed=3)
        res = solve_srls(s.anchors, s.measured_ranges)
        np.testing.assert_allclose(res.position, s.source, atol=1e-6)
        assert res.solver_status == SolverStatus.OPTIMAL
        assert res.converged
        assert res.tight

    def test_minimizes_squared_range_cost(self):
        s = _make_scenario(sigma=0.3, seed=4)
        x = srls(s.anchors, s.measured_ranges)
        best = ml_cost(x, s.anchors, s.measured_ranges, p=2, q=2)
        rng = np.random.default_rng(0)
        for candidate in s.source + rng.normal(0.0, 0.5, size=(200, 2)):
            assert ml_cost(candidate, s.anchors, s.measured_ranges, p=2, q=2) >= best - 1e-6

    def test_fallback(self, monkeypatch):
        def broken(problem, settings):
            raise BisectionFailure("no bracket")

        monkeypatch.setattr(baseline, "solve_gtrs", broken)
        s = _make_scenario(sigma=0.1, seed=5)
        with pytest.warns(FallbackWarning):
            res = solve_srls(s.anchors, s.measured_ranges)
        assert not res.converged
        assert res.solver_status == SolverStatus.INACCURATE
        assert np.all(np.isfinite(res.position))

    def test_strict_fallback_raises(self, monkeypatch):
        def broken(problem, settings):
            raise BisectionFailure("no bracket")

        monkeypatch.setattr(baseline, "solve_gtrs", broken)
        s = _make_scenario(sigma=0.1, seed=5)
        with pytest.raises(BisectionFailure):
            solve_srls(s.anchors, s.measured_ranges, strict=True)
