"""Tests for the planar complex-phase relaxation."""

import math

import numpy as np
import pytest

from rangeloc.analysis import support_point
from rangeloc.config import AlgorithmSettings, RefineSettings, SlcpSettings
from rangeloc.core import AnchorSet, GaussianNoise, RangeVector, SolverStatus, generate_scenario
from rangeloc.errors import DimensionMismatch, TightnessWarning
from rangeloc.sdp import complex_from_embedding, hermitian_embed
from rangeloc.slcp import (
    build_slcp,
    eigen_phase,
    factor_rank1_search_m3,
    factorization_objective,
    nonrelaxed_objective,
    quadratic_form,
    recover_position,
    rotate_phase,
    slcp_phase_objective,
    solve_slcp,
)


def _make_scenario(m: int = 5, sigma: float = 0.0, seed: int = 0, run: int = 0):
    return generate_scenario(m, 2, 10.0, GaussianNoise(sigma=sigma), seed=seed, run_index=run)


def _make_phases(*angles: float) -> np.ndarray:
    return np.exp(1j * np.asarray(angles))


# ── Data ──────────────────────────────────────────────────────────────


class TestBuildSlcp:
    def test_centered_data(self):
        s = _make_scenario()
        data = build_slcp(s.anchors, s.measured_ranges)
        a = s.anchors.as_complex()
        np.testing.assert_allclose(data.c, s.measured_ranges.r * (a - a.mean()))
        assert data.m == 5

    def test_requires_plane(self):
        anchors = AnchorSet(np.eye(3))
        with pytest.raises(DimensionMismatch):
            build_slcp(anchors, RangeVector([1.0, 1.0, 1.0]))

    def test_requires_two_anchors(self):
        with pytest.raises(DimensionMismatch):
            build_slcp(AnchorSet(np.array([[0.0, 0.0]])), RangeVector([1.0]))

    def test_quadratic_form(self):
        rng = np.random.default_rng(4)
        M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        phi = M @ M.conj().T
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        value = float(np.sum(quadratic_form(v) * hermitian_embed(phi)))
        assert value == pytest.approx(np.real(np.vdot(v, phi @ v)))


# ── Phase recovery ────────────────────────────────────────────────────


class TestPhaseRecovery:
    def test_rotation_makes_projection_negative(self):
        c = np.array([1.0 + 1j, -2.0, 0.5j])
        theta = rotate_phase(_make_phases(0.3, 1.2, -2.0), c)
        s = np.vdot(c, theta)
        assert s.real == pytest.approx(-abs(s))
        np.testing.assert_allclose(np.abs(theta), 1.0)

    def test_eigen_phase_of_dyad(self):
        theta = _make_phases(0.0, 0.7, -1.9, 2.5)
        recovered, ratio = eigen_phase(np.outer(theta, theta.conj()))
        np.testing.assert_allclose(recovered, theta, atol=1e-10)
        assert ratio > 1e12

    def test_grid_search_of_dyad(self):
        theta = _make_phases(0.0, 1.1, -0.4)
        phi = np.outer(theta, theta.conj())
        found = factor_rank1_search_m3(phi, grid_points=20_000)
        assert factorization_objective(phi, found) == pytest.approx(9.0, abs=1e-5)

    def test_grid_search_shape(self):
        with pytest.raises(DimensionMismatch):
            factor_rank1_search_m3(np.eye(4))

    def test_grid_beats_or_matches_eigenvector(self):
        rng = np.random.default_rng(8)
        thetas = [_make_phases(*rng.uniform(0, 2 * np.pi, 3)) for _ in range(2)]
        phi = 0.6 * np.outer(thetas[0], thetas[0].conj()) + 0.4 * np.outer(
            thetas[1], thetas[1].conj()
        )
        eig, _ = eigen_phase(phi)
        grid = factor_rank1_search_m3(phi, grid_points=50_000)
        assert factorization_objective(phi, grid) >= factorization_objective(phi, eig) - 1e-6

    def test_projection_lies_on_circles(self):
        s = _make_scenario(sigma=0.1, seed=2)
        data = build_slcp(s.anchors, s.measured_ranges)
        theta = _make_phases(*np.random.default_rng(3).uniform(0, 2 * np.pi, 5))
        _, points = recover_position(data, theta)
        distances = np.linalg.norm(points - s.anchors.positions, axis=1)
        np.testing.assert_allclose(distances, s.measured_ranges.r, rtol=1e-12)


# ── Solve ─────────────────────────────────────────────────────────────


class TestSolveSlcp:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_noiseless_recovery(self, seed):
        s = _make_scenario(seed=seed)
        res = solve_slcp(s.anchors, s.measured_ranges)
        np.testing.assert_allclose(res.position, s.source, atol=1e-4)
        assert res.solver_status == SolverStatus.OPTIMAL
        assert res.tight
        assert res.algorithm == "slcp"
        assert res.relaxation_matrix.shape == (10, 10)

    def test_noisy_estimate_is_close(self):
        s = _make_scenario(sigma=0.01, seed=3)
        res = solve_slcp(s.anchors, s.measured_ranges)
        assert np.linalg.norm(res.position - s.source) < 0.2

    def test_relaxation_bounds_phase_objective(self):
        for run in range(3):
            s = _make_scenario(m=3, sigma=0.1, seed=11, run=run)
            data = build_slcp(s.anchors, s.measured_ranges)
            res = solve_slcp(s.anchors, s.measured_ranges)
            best = nonrelaxed_objective(data, grid_points=300)
            assert res.objective >= best - 1e-6 * max(1.0, abs(best))

    def test_objective_matches_factor_when_tight(self):
        s = _make_scenario(seed=5)
        data = build_slcp(s.anchors, s.measured_ranges)
        res = solve_slcp(s.anchors, s.measured_ranges)
        theta, _ = eigen_phase(complex_from_embedding(res.relaxation_matrix))
        assert slcp_phase_objective(theta, data) == pytest.approx(res.objective, rel=1e-5)

    def test_grid_factorization(self):
        s = _make_scenario(m=3, seed=6)
        settings = AlgorithmSettings(slcp=SlcpSettings(factorization="grid", grid_points=20_000))
        res = solve_slcp(s.anchors, s.measured_ranges, settings)
        assert res.position.shape == (2,)
        assert np.all(np.isfinite(res.position))

    def test_tightness_warning(self):
        s = _make_scenario(seed=7)
        settings = AlgorithmSettings(slcp=SlcpSettings(tightness_threshold=1e20))
        with pytest.warns(TightnessWarning):
            solve_slcp(s.anchors, s.measured_ranges, settings)

    @pytest.mark.parametrize("angle", [0.4, 2.0, -2.7])
    def test_rigid_motion_invariance(self, angle):
        s = _make_scenario(sigma=1e-2, seed=9)
        Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        shift = np.array([3.0, -7.5])
        moved = AnchorSet(s.anchors.positions @ Q.T + shift)
        base = solve_slcp(s.anchors, s.measured_ranges).position
        res = solve_slcp(moved, s.measured_ranges)
        np.testing.assert_allclose(res.position, Q @ base + shift, atol=1e-7)

    def test_polish_sharpens_relaxed_estimate(self):
        s = _make_scenario(seed=2)
        raw = solve_slcp(s.anchors, s.measured_ranges,
                         AlgorithmSettings(refine=RefineSettings(enabled=False)))
        polished = solve_slcp(s.anchors, s.measured_ranges)
        assert np.linalg.norm(raw.position - s.source) < 5e-2
        assert np.linalg.norm(polished.position - s.source) <= 1e-6
        assert raw.eig_ratio == polished.eig_ratio

    @pytest.mark.parametrize("seed", [10, 11])
    def test_optimum_on_upper_right_boundary(self, seed):
        s = _make_scenario(sigma=1e-2, seed=seed)
        data = build_slcp(s.anchors, s.measured_ranges)
        S = solve_slcp(s.anchors, s.measured_ranges).relaxation_matrix
        u = float(np.sum(quadratic_form(data.c) * S))
        v = float(np.sum(quadratic_form(data.r) * S))
        # normal of the level set of 2√u + v/m
        beta = math.atan2(1.0 / data.m, 1.0 / math.sqrt(u))
        p = support_point(data.c, data.r, beta)
        support = math.cos(beta) * p[0] + math.sin(beta) * p[1]
        assert math.cos(beta) * u + math.sin(beta) * v == pytest.approx(support, rel=1e-6)
