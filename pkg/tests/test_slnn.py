"""Tests for the nuclear-norm relaxation and its recovery steps."""

import numpy as np
import pytest
from scipy.stats import ortho_group

from rangeloc.core import GaussianNoise, SolverStatus, generate_scenario
from rangeloc.errors import DegenerateRow
from rangeloc.sdp import solve_sdp
from rangeloc.slcp import solve_slcp
from rangeloc.slnn import (
    build_slnn,
    centering_projector,
    concave_objective,
    directions_from_gram,
    frobenius_inner_bound,
    inner_rotation,
    nuclear_norm,
    rows_to_unit,
    slnn_problem,
    solve_slnn,
)


def _make_scenario(n: int = 2, m: int = 5, sigma: float = 0.0, seed: int = 0):
    return generate_scenario(m, n, 10.0, GaussianNoise(sigma=sigma), seed=seed)


# ── Linear algebra ────────────────────────────────────────────────────


class TestNorms:
    def test_nuclear_frobenius_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            M = rng.normal(size=(3, 3))
            fro = np.linalg.norm(M)
            nuc = nuclear_norm(M)
            assert fro <= nuc + 1e-12
            assert nuc <= np.sqrt(3) * fro + 1e-12

    def test_centering_projector(self):
        Pi = centering_projector(4)
        np.testing.assert_allclose(Pi @ np.ones(4), 0.0, atol=1e-15)
        np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-15)


class TestRecovery:
    def test_rows_to_unit(self):
        U = rows_to_unit(np.array([[3.0, 4.0], [0.0, -2.0]]))
        np.testing.assert_allclose(U, [[0.6, 0.8], [0.0, -1.0]])

    def test_degenerate_row(self):
        with pytest.raises(DegenerateRow):
            rows_to_unit(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_inner_rotation_is_optimal(self):
        rng = np.random.default_rng(1)
        U = rows_to_unit(rng.normal(size=(5, 3)))
        C = rng.normal(size=(5, 3))
        V = inner_rotation(U, C)
        np.testing.assert_allclose(V @ V.T, np.eye(3), atol=1e-12)
        best = np.trace(C.T @ U @ V)
        assert best == pytest.approx(-nuclear_norm(U.T @ C))
        for Q in ortho_group.rvs(3, size=200, random_state=2):
            assert np.trace(C.T @ U @ Q) >= best - 1e-10

    def test_inner_rotation_deterministic(self):
        rng = np.random.default_rng(3)
        U = rows_to_unit(rng.normal(size=(4, 2)))
        C = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(inner_rotation(U, C), inner_rotation(U.copy(), C.copy()))

    def test_frobenius_bound(self):
        rng = np.random.default_rng(4)
        U = rows_to_unit(rng.normal(size=(5, 2)))
        C = rng.normal(size=(5, 2))
        V, value = frobenius_inner_bound(U, C)
        assert np.linalg.norm(V) ** 2 == pytest.approx(2.0)
        assert np.trace(C.T @ U @ V) == pytest.approx(value)
        assert value <= -nuclear_norm(U.T @ C) + 1e-12

    def test_directions_pad_when_few_anchors(self):
        W = np.ones((2, 2))
        U, _ = directions_from_gram(W, 3)
        assert U.shape == (2, 3)
        np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0)


# ── Relaxation ────────────────────────────────────────────────────────


class TestSlnnProblem:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_schur_form_matches_concave_objective(self, seed):
        s = _make_scenario(n=3, sigma=0.1, seed=seed)
        data = build_slnn(s.anchors, s.measured_ranges)
        sol = solve_sdp(slnn_problem(data))
        W = sol.block_values["W"]
        assert concave_objective(W, data) == pytest.approx(sol.objective_value, rel=1e-5)

    def test_unit_diagonal(self):
        s = _make_scenario(sigma=0.1)
        data = build_slnn(s.anchors, s.measured_ranges)
        W = solve_sdp(slnn_problem(data)).block_values["W"]
        np.testing.assert_allclose(np.diag(W), 1.0, atol=1e-6)


class TestSolveSlnn:
    @pytest.mark.parametrize("n,seed", [(2, 0), (2, 1), (3, 0), (3, 1)])
    def test_noiseless_recovery(self, n, seed):
        s = _make_scenario(n=n, seed=seed)
        res = solve_slnn(s.anchors, s.measured_ranges)
        np.testing.assert_allclose(res.position, s.source, atol=1e-4)
        assert res.solver_status == SolverStatus.OPTIMAL
        assert res.algorithm == "slnn"
        assert res.tight

    def test_agrees_with_slcp_in_plane(self):
        s = _make_scenario(sigma=1e-3, seed=4)
        a = solve_slnn(s.anchors, s.measured_ranges).position
        b = solve_slcp(s.anchors, s.measured_ranges).position
        assert np.linalg.norm(a - b) < 0.05

    def test_underdetermined_is_inaccurate(self):
        s = _make_scenario(n=3, m=3, seed=5)
        res = solve_slnn(s.anchors, s.measured_ranges)
        assert res.solver_status == SolverStatus.INACCURATE
        assert res.position.shape == (3,)
