"""Squared-range least-squares (SR-LS) baseline.

minimize ‖My − b‖²  subject to  yᵀDy + 2fᵀy = 0, with y = [x; ‖x‖²].
This is a generalized trust-region subproblem; its solution is
y(ν) = (MᵀM + νD)⁻¹(Mᵀb − νf) for the multiplier ν at which the
constraint function crosses zero on the interval where MᵀM + νD ≻ 0.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from rangeloc.config import AlgorithmSettings, BaselineSettings
from rangeloc.core import (
    EIG_RATIO_CAP,
    AnchorSet,
    LocalizationResult,
    RangeVector,
    SolverStatus,
    check_compatible,
)
from rangeloc.errors import BisectionFailure, FallbackWarning, RankDeficient, warn

logger = logging.getLogger(__name__)

_MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class GtrsProblem:
    """M y ≈ b with the quadratic constraint yᵀDy + 2fᵀy = 0."""

    M: np.ndarray
    b: np.ndarray
    D: np.ndarray
    f: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[1] - 1

    def y(self, nu: float) -> np.ndarray:
        gram = self.M.T @ self.M + nu * self.D
        return linalg.solve(gram, self.M.T @ self.b - nu * self.f, assume_a="sym")

    def constraint(self, y: np.ndarray) -> float:
        return float(y @ self.D @ y + 2.0 * self.f @ y)

    def phi(self, nu: float) -> float:
        return self.constraint(self.y(nu))


def build_gtrs(anchors: AnchorSet, ranges: RangeVector) -> GtrsProblem:
    """Rows [2a_iᵀ, −1], b_i = ‖a_i‖² − r_i², D = diag(I_n, 0), f = (0, …, 0, −½).

    Raises:
        RankDeficient: fewer than n + 1 anchors or M without full column rank.
    """
    check_compatible(anchors, ranges)
    m, n = anchors.m, anchors.n
    A = anchors.positions
    M = np.hstack([2.0 * A, -np.ones((m, 1))])
    if m < n + 1 or np.linalg.matrix_rank(M) < n + 1:
        raise RankDeficient(f"SR-LS needs a full column rank design, m={m} n={n}")
    b = np.sum(A**2, axis=1) - ranges.r**2
    D = np.diag(np.r_[np.ones(n), 0.0])
    f = np.r_[np.zeros(n), -0.5]
    return GtrsProblem(M=M, b=b, D=D, f=f)


def multiplier_interval(problem: GtrsProblem, settings: BaselineSettings) -> tuple[float, float]:
    """Bracket [lo, hi] of the multiplier with φ(lo) > 0 > φ(hi).

    Raises:
        BisectionFailure: the endpoints do not bracket a root.
    """
    gen = linalg.eigh(problem.D, problem.M.T @ problem.M, eigvals_only=True)
    lo = -1.0 / float(gen[-1]) + settings.margin
    if problem.phi(lo) <= 0:
        raise BisectionFailure(f"constraint function is not positive at nu={lo:.6g}")
    hi = max(1.0, abs(lo))
    for _ in range(_MAX_DOUBLINGS):
        if problem.phi(hi) < 0:
            logger.debug("SR-LS multiplier bracket [%.6g, %.6g]", lo, hi)
            return lo, hi
        hi *= 2.0
    raise BisectionFailure(f"constraint function stays positive up to nu={hi:.6g}")


def solve_gtrs(problem: GtrsProblem, settings: BaselineSettings) -> np.ndarray:
    """y(ν*) with ν* found by bisection."""
    lo, hi = multiplier_interval(problem, settings)
    try:
        nu = optimize.bisect(problem.phi, lo, hi, xtol=settings.tolerance,
                             maxiter=settings.max_iters)
    except RuntimeError as e:
        raise BisectionFailure(str(e)) from e
    return problem.y(nu)


def solve_srls(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
    strict: bool = False,
) -> LocalizationResult:
    """SR-LS estimate wrapped as a result record.

    When bisection cannot bracket the multiplier the unconstrained least
    squares solution is returned with ``converged=False`` and a
    :class:`FallbackWarning`, unless ``strict`` is set.
    """
    opts = (settings or AlgorithmSettings()).baseline
    problem = build_gtrs(anchors, ranges)
    started = time.perf_counter()
    converged = True
    try:
        y = solve_gtrs(problem, opts)
    except BisectionFailure as e:
        if strict:
            raise
        warn(f"SR-LS fell back to unconstrained least squares: {e}", FallbackWarning, logger)
        y, *_ = linalg.lstsq(problem.M, problem.b)
        converged = False
    elapsed = time.perf_counter() - started

    residual = float(np.sum((problem.M @ y - problem.b) ** 2))
    logger.info("SR-LS solved: m=%d n=%d residual=%.6g", anchors.m, anchors.n, residual)
    return LocalizationResult(
        position=y[: problem.n],
        relaxation_matrix=np.zeros((0, 0)),
        eig_ratio=EIG_RATIO_CAP,
        objective=residual,
        solver_status=SolverStatus.OPTIMAL if converged else SolverStatus.INACCURATE,
        iterations=1,
        algorithm="srls",
        converged=converged,
        solve_time=elapsed,
    )


def srls(anchors: AnchorSet, ranges: RangeVector,
         settings: AlgorithmSettings | None = None) -> np.ndarray:
    """SR-LS position estimate."""
    return solve_srls(anchors, ranges, settings).position
