"""n-dimensional Gaussian-ML localization via the nuclear-norm relaxation.

Each measurement sphere is parameterized by a unit direction u_i; the
unknown rotation between the relaxed directions and the true ones is
solved in closed form, which turns the inner problem into a nuclear norm
that admits an exact SDP representation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from rangeloc.builder import ProblemBuilder, SdpProblem, congruence, constant, entry, inner, trace
from rangeloc.config import AlgorithmSettings
from rangeloc.core import (
    AnchorSet,
    LocalizationResult,
    RangeVector,
    SolverStatus,
    centroid,
    check_compatible,
    project_to_spheres,
    refine_position,
    weighted_centroid,
)
from rangeloc.errors import DegenerateRow, TightnessWarning, warn
from rangeloc.sdp import SdpSolution, solve_sdp, top_k_factor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlnnData:
    """A, R, C = R·Π·A, r and the projector Π.

    ``kappa`` scales the range term of the objective: m for the plain
    problem, Σ1/λ_i for the weighted one.
    """

    A: np.ndarray
    R: np.ndarray
    C: np.ndarray
    r: np.ndarray
    Pi: np.ndarray
    kappa: float

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @property
    def n(self) -> int:
        return int(self.A.shape[1])


def centering_projector(m: int) -> np.ndarray:
    return np.eye(m) - np.ones((m, m)) / m


def build_slnn(anchors: AnchorSet, ranges: RangeVector) -> SlnnData:
    """Assemble C = RΠA and r = R𝟙 for the unweighted problem."""
    check_compatible(anchors, ranges)
    if anchors.m < anchors.n + 1:
        logger.warning(
            "SLNN with m=%d anchors in n=%d dimensions is underdetermined",
            anchors.m, anchors.n,
        )
    A = anchors.positions.copy()
    R = np.diag(ranges.r)
    Pi = centering_projector(anchors.m)
    return SlnnData(A=A, R=R, C=R @ Pi @ A, r=ranges.r.copy(), Pi=Pi, kappa=float(anchors.m))


def slnn_problem(data: SlnnData, name: str = "slnn") -> SdpProblem:
    """maximize 2tr(Z) + (1/κ)rᵀWr  s.t.  W ⪰ 0, w_ii = 1, [[CᵀWC, Z], [Z, I]] ⪰ 0, Z ⪰ 0."""
    m, n = data.m, data.n
    b = ProblemBuilder(name)
    b.add_psd_block("W", m)
    b.add_psd_block("Z", n)
    for i in range(m):
        b.add_constraint(entry("W", i, i, (m, m)) - constant(1.0), "==", f"unit row {i}")
    z = congruence("Z", np.eye(n))
    b.add_lmi([[congruence("W", data.C.T), z], [z, constant(np.eye(n))]], "nuclear norm")
    b.set_objective(2.0 * trace("Z", n) + inner("W", np.outer(data.r, data.r) / data.kappa),
                    "maximize")
    return b.build()


# ── Recovery ──────────────────────────────────────────────────────────


def nuclear_norm(M: np.ndarray) -> float:
    """Sum of singular values."""
    return float(np.sum(linalg.svdvals(np.atleast_2d(M))))


def rows_to_unit(U_raw: np.ndarray) -> np.ndarray:
    """Scale every row to unit norm.

    Raises:
        DegenerateRow: a row is (numerically) zero.
    """
    U_raw = np.asarray(U_raw, dtype=float)
    norms = np.linalg.norm(U_raw, axis=1)
    zero = np.flatnonzero(norms < 1e-12)
    if zero.size:
        raise DegenerateRow(f"row(s) {zero.tolist()} have zero norm")
    return U_raw / norms[:, None]


def inner_rotation(U: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Orthogonal V minimizing tr(CᵀUV): V = −PQᵀ for UᵀC = PΣQᵀ.

    Left singular vectors are signed so that their largest-magnitude entry
    is positive (right vectors follow), which makes V deterministic.
    """
    P, _, Qt = linalg.svd(np.asarray(U).T @ np.asarray(C))
    idx = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[idx, np.arange(P.shape[1])])
    signs[signs == 0] = 1.0
    P = P * signs
    Qt = Qt * signs[:, None]
    return -P @ Qt


def frobenius_inner_bound(U: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimizer and value of tr(CᵀUV) over ‖V‖_F² = n instead of orthogonal V.

    Returns (−√n·UᵀC/‖UᵀC‖_F, −√n‖UᵀC‖_F); the value bounds the orthogonal
    optimum −‖CᵀU‖_N from below.
    """
    M = np.asarray(U).T @ np.asarray(C)
    n = M.shape[0]
    fro = float(np.linalg.norm(M))
    if fro == 0.0:
        return np.zeros_like(M), 0.0
    return -np.sqrt(n) * M / fro, -np.sqrt(n) * fro


def concave_objective(W: np.ndarray, data: SlnnData) -> float:
    """2tr((CᵀWC)^{1/2}) + (1/κ)rᵀWr, the objective before the Schur-complement step."""
    gram = data.C.T @ W @ data.C
    eig = np.clip(linalg.eigvalsh(0.5 * (gram + gram.T)), 0.0, None)
    return float(2.0 * np.sum(np.sqrt(eig)) + data.r @ W @ data.r / data.kappa)


def directions_from_gram(W: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Unit-row U (m × n) from the top-n eigenpairs of W and λ_n/λ_{n+1}."""
    m = W.shape[0]
    k = min(n, m)
    factor, ratio = top_k_factor(W, k)
    if k < n:
        factor = np.hstack([factor, np.zeros((m, n - k))])
    return rows_to_unit(factor), ratio


@dataclass(frozen=True)
class Recovery:
    position: np.ndarray
    points: np.ndarray
    directions: np.ndarray
    eig_ratio: float


def recover_from_gram(W: np.ndarray, anchors: AnchorSet, ranges: RangeVector, data: SlnnData,
                      weights: np.ndarray | None = None) -> Recovery:
    """Factor W, rotate, project onto the spheres and average (weighted when λ is given)."""
    U, ratio = directions_from_gram(W, data.n)
    V = inner_rotation(U, data.C)
    Y = project_to_spheres(anchors, ranges, U @ V)
    position = centroid(Y) if weights is None else weighted_centroid(Y, weights)
    return Recovery(position=position, points=Y, directions=U @ V, eig_ratio=ratio)


def _status(solution: SdpSolution, anchors: AnchorSet) -> SolverStatus:
    if anchors.m <= anchors.n:
        return SolverStatus.INACCURATE
    return solution.status


# ── Solve ─────────────────────────────────────────────────────────────


def solve_slnn(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
) -> LocalizationResult:
    """Localize a source in any dimension with the nuclear-norm relaxation.

    Args:
        anchors: Anchor positions (m × n).
        ranges: Measured ranges.
        settings: Solver settings; defaults when omitted.

    Returns:
        Estimate with W as relaxation matrix and λ_n/λ_{n+1} as eig_ratio,
        polished on the Gaussian ML cost unless ``settings.refine`` disables it.
        The status is downgraded to Inaccurate when m ≤ n.
    """
    settings = settings or AlgorithmSettings()
    data = build_slnn(anchors, ranges)
    solution = solve_sdp(slnn_problem(data), settings.solver)
    W = solution.block_values["W"]
    rec = recover_from_gram(W, anchors, ranges, data)
    position = rec.position
    if settings.refine.enabled:
        position = refine_position(position, anchors, ranges, "gaussian",
                                   settings.refine.max_nfev)

    if rec.eig_ratio < settings.slnn.tightness_threshold:
        warn(
            f"SLNN relaxation not tight: eig_ratio {rec.eig_ratio:.3g} < "
            f"{settings.slnn.tightness_threshold:g}",
            TightnessWarning,
            logger,
        )
    status = _status(solution, anchors)
    logger.info(
        "SLNN solved: m=%d n=%d status=%s eig_ratio=%.3g objective=%.6g",
        data.m, data.n, status, rec.eig_ratio, solution.objective_value,
    )
    return LocalizationResult(
        position=position,
        relaxation_matrix=W,
        eig_ratio=rec.eig_ratio,
        objective=solution.objective_value,
        solver_status=status,
        iterations=1,
        algorithm="slnn",
        solve_time=solution.solve_time,
    )
