"""Planar Gaussian-ML localization via the complex-phase relaxation.

Anchors are packed as complex numbers and each measurement circle is
parameterized by a unit-modulus phase θ_i. Dropping the rank constraint on
Φ = θθ^H gives a small Hermitian SDP; the estimate is recovered from the
dominant eigenvector by a global phase rotation and a projection onto the
circles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from rangeloc.builder import ProblemBuilder, SdpProblem, congruence, constant, entry, inner
from rangeloc.config import AlgorithmSettings
from rangeloc.core import (
    AnchorSet,
    LocalizationResult,
    RangeVector,
    centroid,
    check_compatible,
    refine_position,
)
from rangeloc.errors import DimensionMismatch, TightnessWarning, warn
from rangeloc.sdp import complex_from_embedding, solve_sdp, top_k_factor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlcpData:
    """c = R(I − (1/m)𝟙𝟙ᵀ)a, r = R𝟙 and the complex anchors a."""

    c: np.ndarray
    r: np.ndarray
    a: np.ndarray

    @property
    def m(self) -> int:
        return int(self.r.size)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r)


def build_slcp(anchors: AnchorSet, ranges: RangeVector) -> SlcpData:
    """Pack a planar instance into the complex-plane data of the relaxation.

    Raises:
        DimensionMismatch: anchors are not planar or fewer than two.
    """
    check_compatible(anchors, ranges)
    if anchors.n != 2:
        raise DimensionMismatch(f"SLCP is planar, got n = {anchors.n}")
    if anchors.m < 2:
        raise DimensionMismatch(f"SLCP needs at least 2 anchors, got {anchors.m}")
    if anchors.m < 3:
        logger.warning("SLCP with %d anchors: the source is not identifiable", anchors.m)
    a = anchors.as_complex()
    r = ranges.r.copy()
    c = r * (a - a.mean())
    return SlcpData(c=c, r=r, a=a)


def quadratic_form(v: np.ndarray) -> np.ndarray:
    """Coefficient Q with ⟨Q, S⟩ = v^H Φ v for S = embed(Φ)."""
    v = np.asarray(v, dtype=complex)
    v1 = np.concatenate([v.real, v.imag])
    v2 = np.concatenate([-v.imag, v.real])
    return 0.5 * (np.outer(v1, v1) + np.outer(v2, v2))


def add_phase_matrix(b: ProblemBuilder, m: int, name: str = "S") -> None:
    """Declare the embedding S of a Hermitian Φ ⪰ 0 with unit diagonal.

    S = [[S11, S12], [S21, S22]] is tied by S11 = S22 and S21 = −S21ᵀ.
    """
    size = (2 * m, 2 * m)
    top = np.eye(2 * m)[:m]
    bottom = np.eye(2 * m)[m:]
    b.add_psd_block(name, 2 * m)
    b.add_constraint(congruence(name, top) - congruence(name, bottom), "==", "real parts tied")
    b.add_constraint(
        congruence(name, bottom, top) + congruence(name, top, bottom), "==", "imaginary part skew"
    )
    for i in range(m):
        b.add_constraint(entry(name, i, i, size) - constant(1.0), "==", f"unit modulus {i}")


def slcp_problem(data: SlcpData) -> SdpProblem:
    """maximize t + (1/m) rᵀΦr  s.t.  Φ ⪰ 0, φ_ii = 1, [[4c^HΦc, t], [t, 1]] ⪰ 0, t ≥ 0."""
    m = data.m
    b = ProblemBuilder("slcp")
    add_phase_matrix(b, m)
    b.add_free("t")
    t = congruence("t", [[1.0]])
    hypograph = inner("S", 4.0 * quadratic_form(data.c))
    b.add_lmi([[hypograph, t], [t, constant(1.0)]], "hypograph")
    b.add_constraint(t, ">=", "t nonnegative")
    b.set_objective(t + inner("S", quadratic_form(data.r) / m), "maximize")
    return b.build()


# ── Phase recovery ────────────────────────────────────────────────────


def _unit(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=complex)
    mod = np.abs(theta)
    return np.where(mod > 1e-12, theta / np.where(mod > 1e-12, mod, 1.0), 1.0 + 0j)


def rotate_phase(theta: np.ndarray, c: np.ndarray) -> np.ndarray:
    """θ·e^{jγ} with γ = π − arg(c^Hθ), so that Re(c^Hθ') = −|c^Hθ'|.

    Entries are renormalized to unit modulus first; c^Hθ = 0 leaves θ as is.
    """
    theta = _unit(theta)
    s = np.vdot(c, theta)
    if abs(s) == 0.0:
        return theta
    return theta * np.exp(1j * (np.pi - np.angle(s)))


def factorization_objective(phi: np.ndarray, theta: np.ndarray) -> float:
    """θ^HΦθ."""
    return float(np.real(np.vdot(theta, phi @ theta)))


def factor_rank1_search_m3(phi: np.ndarray, grid_points: int = 200_000) -> np.ndarray:
    """Unit-modulus θ = (1, e^{jα}, e^{j(α+δ)}) maximizing θ^HΦθ for a 3 × 3 Φ.

    For each α on a uniform grid, δ = −arg(φ23 + φ13e^{jα}) is optimal in
    closed form, which leaves the scalar search
    max_α Re(φ12e^{jα}) + |φ23 + φ13e^{jα}|.

    Raises:
        DimensionMismatch: Φ is not 3 × 3.
    """
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (3, 3):
        raise DimensionMismatch(f"grid factorization needs a 3 x 3 matrix, got {phi.shape}")
    alpha = 2.0 * np.pi * np.arange(grid_points) / grid_points
    rot = np.exp(1j * alpha)
    inner_sum = phi[1, 2] + phi[0, 2] * rot
    score = np.real(phi[0, 1] * rot) + np.abs(inner_sum)
    best = int(np.argmax(score))
    delta = -np.angle(inner_sum[best])
    return np.array([1.0, rot[best], np.exp(1j * (alpha[best] + delta))])


def eigen_phase(phi: np.ndarray) -> tuple[np.ndarray, float]:
    """Dominant eigenvector of Φ with θ1 at zero phase and unit-modulus entries."""
    factor, ratio = top_k_factor(phi, 1)
    theta = factor[:, 0]
    if abs(theta[0]) > 0:
        theta = theta * np.exp(-1j * np.angle(theta[0]))
    return _unit(theta), ratio


def recover_position(data: SlcpData, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotate θ, project onto the circles and return (position, projected points)."""
    theta = rotate_phase(theta, data.c)
    y = data.a + data.r * theta
    points = np.column_stack([y.real, y.imag])
    return centroid(points), points


# ── Objective oracles ─────────────────────────────────────────────────


def slcp_phase_objective(theta: np.ndarray, data: SlcpData) -> float:
    """2|c^Hθ| + (1/m)|rᵀθ|², the non-relaxed objective at the best global rotation."""
    theta = _unit(theta)
    return float(2.0 * abs(np.vdot(data.c, theta)) + abs(data.r @ theta) ** 2 / data.m)


def nonrelaxed_objective(data: SlcpData, grid_points: int = 2000) -> float:
    """Brute-force maximum of :func:`slcp_phase_objective` over a phase grid (m = 3).

    θ1 is fixed to 1 and (φ2, φ3) range over a ``grid_points``² grid.
    """
    if data.m != 3:
        raise DimensionMismatch(f"grid oracle needs m = 3, got {data.m}")
    phases = np.exp(2j * np.pi * np.arange(grid_points) / grid_points)
    c, r = data.c.conj(), data.r
    best = -np.inf
    for p2 in phases:
        cdot = c[0] + c[1] * p2 + c[2] * phases
        rdot = r[0] + r[1] * p2 + r[2] * phases
        values = 2.0 * np.abs(cdot) + np.abs(rdot) ** 2 / 3.0
        best = max(best, float(values.max()))
    return best


# ── Solve ─────────────────────────────────────────────────────────────


def solve_slcp(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
) -> LocalizationResult:
    """Localize a planar source with the complex-phase relaxation.

    Args:
        anchors: Planar anchor positions.
        ranges: Measured ranges.
        settings: Solver and factorization settings; defaults when omitted.

    Returns:
        Estimate with the embedded Φ as relaxation matrix and λ1/λ2 of Φ as
        eig_ratio. The recovered point is polished on the Gaussian ML cost
        unless ``settings.refine`` disables it.

    Raises:
        DimensionMismatch: the instance is not planar.
        SdpError: the backend failed.
    """
    settings = settings or AlgorithmSettings()
    data = build_slcp(anchors, ranges)
    solution = solve_sdp(slcp_problem(data), settings.solver)

    embedded = solution.block_values["S"]
    phi = complex_from_embedding(embedded)
    theta, ratio = eigen_phase(phi)
    if settings.slcp.factorization == "grid":
        if data.m == 3:
            theta = factor_rank1_search_m3(phi, settings.slcp.grid_points)
        else:
            logger.debug("Grid factorization needs m = 3, using eigenvector for m = %d", data.m)
    position, _ = recover_position(data, theta)
    if settings.refine.enabled:
        position = refine_position(position, anchors, ranges, "gaussian",
                                   settings.refine.max_nfev)

    if ratio < settings.slcp.tightness_threshold:
        warn(
            f"SLCP relaxation not tight: eig_ratio {ratio:.3g} < "
            f"{settings.slcp.tightness_threshold:g}",
            TightnessWarning,
            logger,
        )
    logger.info(
        "SLCP solved: m=%d status=%s eig_ratio=%.3g objective=%.6g",
        data.m, solution.status, ratio, solution.objective_value,
    )
    return LocalizationResult(
        position=position,
        relaxation_matrix=embedded,
        eig_ratio=ratio,
        objective=solution.objective_value,
        solver_status=solution.status,
        iterations=1,
        algorithm="slcp",
        solve_time=solution.solve_time,
    )
