"""Tightness and geometry tooling for the complex-phase relaxation.

The relaxation is tight when the image of unit-modulus phase vectors under
the two quadratic forms (|c^Hθ|², |rᵀθ|²) and the image of its PSD
relaxation share their upper-right boundary. This module samples the
first set, traces the second with supporting hyperplanes, looks for flat
stretches on the traced boundary, summarizes tightness over many runs and
writes boundary 3 × 3 relaxed matrices as convex combinations of dyads.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import pdist

from rangeloc.builder import ProblemBuilder, inner
from rangeloc.config import AlgorithmSettings, SolverSettings
from rangeloc.core import LocalizationResult, SolverStatus, rmse
from rangeloc.errors import (
    NotBoundary,
    NotHermitian,
    NotPsd,
    NotUnitDiagonal,
    SdpError,
    ValidationError,
)
from rangeloc.sdp import complex_from_embedding, solve_sdp
from rangeloc.slcp import add_phase_matrix, quadratic_form

logger = logging.getLogger(__name__)


# ── Sampled and relaxed image sets ────────────────────────────────────


def sample_set_S(c: np.ndarray, r: np.ndarray, n_samples: int,
                 rng: np.random.Generator) -> np.ndarray:
    """(|c^Hθ|², |rᵀθ|²) for θ with θ1 = 1 and i.i.d. uniform phases elsewhere.

    Returns:
        ``n_samples`` × 2 array of (u, v) points.
    """
    c = np.asarray(c, dtype=complex)
    r = np.asarray(r, dtype=float)
    if c.size != r.size:
        raise ValidationError(f"c has {c.size} entries, r has {r.size}")
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_samples, c.size - 1))
    theta = np.hstack([np.ones((n_samples, 1)), np.exp(1j * phases)])
    u = np.abs(theta @ c.conj()) ** 2
    v = np.abs(theta @ r) ** 2
    return np.column_stack([u, v])


def support_point(c: np.ndarray, r: np.ndarray, beta: float,
                  settings: SolverSettings | None = None) -> np.ndarray:
    """Point (tr(cc^HΦ), tr(rrᵀΦ)) of the relaxed set maximizing the β direction.

    Solves maximize cosβ·c^HΦc + sinβ·rᵀΦr over Φ ⪰ 0 with unit diagonal.
    """
    c = np.asarray(c, dtype=complex)
    r = np.asarray(r, dtype=float)
    qc, qr = quadratic_form(c), quadratic_form(r)
    b = ProblemBuilder("support")
    add_phase_matrix(b, c.size)
    b.set_objective(inner("S", math.cos(beta) * qc + math.sin(beta) * qr), "maximize")
    solution = solve_sdp(b.build(), settings)
    S = solution.block_values["S"]
    return np.array([float(np.sum(qc * S)), float(np.sum(qr * S))])


def ellipse_support(c: np.ndarray, r: np.ndarray, beta: float) -> float:
    """Support value of the two-anchor image set in the direction (cosβ, sinβ).

    With θ = (1, e^{jφ}) both coordinates are sinusoids in φ, so the set is
    an ellipse and its support function has a closed form.
    """
    c = np.asarray(c, dtype=complex)
    r = np.asarray(r, dtype=float)
    if c.size != 2:
        raise ValidationError(f"closed form needs two anchors, got {c.size}")
    cb, sb = math.cos(beta), math.sin(beta)
    center = cb * float(np.sum(np.abs(c) ** 2)) + sb * float(np.sum(r**2))
    return center + 2.0 * abs(cb * c[0] * np.conj(c[1]) + sb * r[0] * r[1])


def ellipse_point(c: np.ndarray, r: np.ndarray, phi: float) -> np.ndarray:
    """(u, v) of the two-anchor image set at θ = (1, e^{jφ})."""
    theta = np.array([1.0, np.exp(1j * phi)])
    return np.array([abs(np.vdot(c, theta)) ** 2, abs(np.asarray(r) @ theta) ** 2])


@dataclass(frozen=True)
class HullTrace:
    """Support points of the relaxed set ordered by the normal angle β."""

    betas: np.ndarray
    points: np.ndarray
    gaps: tuple[tuple[float, float], ...] = ()
    skipped: tuple[float, ...] = ()
    conjectural: bool = False

    def __len__(self) -> int:
        return int(self.betas.size)

    @property
    def diameter(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.max(pdist(self.points)))

    def support_values(self) -> np.ndarray:
        return np.cos(self.betas) * self.points[:, 0] + np.sin(self.betas) * self.points[:, 1]


def find_gaps(betas: np.ndarray, points: np.ndarray,
              rel_threshold: float) -> tuple[tuple[float, float], ...]:
    """(β, distance) for consecutive points farther apart than rel_threshold × diameter."""
    if len(points) < 2:
        return ()
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    diameter = float(np.max(pdist(points)))
    if diameter == 0.0:
        return ()
    idx = np.flatnonzero(steps > rel_threshold * diameter)
    return tuple((float(betas[i]), float(steps[i])) for i in idx)


def trace_hull(c: np.ndarray, r: np.ndarray, n_betas: int | None = None,
               settings: AlgorithmSettings | None = None) -> HullTrace:
    """Trace the upper-right boundary of the relaxed set.

    Normals sweep [0, π/2] (or all of [0, 2π) when full-hull tracing is on,
    in which case the trace is flagged conjectural). A grid point whose
    solve fails is logged and skipped.
    """
    settings = settings or AlgorithmSettings()
    opts = settings.analysis
    n_betas = n_betas or opts.n_betas
    if n_betas < 2:
        raise ValidationError(f"n_betas must be >= 2, got {n_betas}")
    if opts.full_hull:
        grid = np.linspace(0.0, 2.0 * np.pi, n_betas, endpoint=False)
    else:
        grid = np.linspace(0.0, 0.5 * np.pi, n_betas)

    betas: list[float] = []
    points: list[np.ndarray] = []
    skipped: list[float] = []
    for beta in grid:
        try:
            points.append(support_point(c, r, float(beta), settings.solver))
            betas.append(float(beta))
        except SdpError as e:
            logger.debug("Support point at beta=%.4f skipped: %s", beta, e)
            skipped.append(float(beta))

    beta_arr = np.asarray(betas)
    point_arr = np.asarray(points).reshape(-1, 2)
    trace = HullTrace(
        betas=beta_arr,
        points=point_arr,
        gaps=find_gaps(beta_arr, point_arr, opts.gap_threshold),
        skipped=tuple(skipped),
        conjectural=opts.full_hull,
    )
    logger.info(
        "Hull traced: %d points, %d skipped, %d gap(s)%s",
        len(trace), len(skipped), len(trace.gaps), " (conjectural)" if opts.full_hull else "",
    )
    return trace


def convexity_test(trace: HullTrace, rel_threshold: float = 0.02,
                   ) -> tuple[bool, tuple[tuple[float, float], ...]]:
    """Pass when no consecutive traced points are farther apart than the threshold."""
    if len(trace) == 0:
        raise ValidationError("empty hull trace")
    gaps = find_gaps(trace.betas, trace.points, rel_threshold)
    return not gaps, gaps


# ── Tightness statistics ──────────────────────────────────────────────


@dataclass(frozen=True)
class TightnessStats:
    n_tight: int
    n_total: int
    rmse_all: float | None
    rmse_tight: float | None


def tightness_stats(
    results: Sequence[LocalizationResult],
    truths: Sequence[np.ndarray],
    ratio_threshold: float = 1e2,
) -> TightnessStats:
    """Tight-run count and RMSE over all and over tight runs.

    Failed runs count toward neither RMSE. An empty subset yields ``None``.
    """
    if not results:
        raise ValidationError("no results")
    ok = [(res, x) for res, x in zip(results, truths, strict=True)
          if res.solver_status != SolverStatus.FAILED]
    tight = [(res, x) for res, x in ok if res.eig_ratio >= ratio_threshold]

    def _rmse(pairs: list[tuple[LocalizationResult, np.ndarray]]) -> float | None:
        if not pairs:
            return None
        return rmse([p.position for p, _ in pairs], [x for _, x in pairs])

    return TightnessStats(
        n_tight=len(tight),
        n_total=len(results),
        rmse_all=_rmse(ok),
        rmse_tight=_rmse(tight),
    )


# ── Dyad decomposition ────────────────────────────────────────────────

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Canonical:
    """Φ' = D·P·Φ·Pᵀ·D^H = [[1, a, b], [a, 1, w], [b, w̄, 1]] with 0 ≤ a ≤ b ≤ 1."""

    perm: tuple[int, int, int]
    phases: np.ndarray
    a: float
    b: float
    w: complex

    @property
    def radius(self) -> float:
        return math.sqrt(max(0.0, (1.0 - self.a**2) * (1.0 - self.b**2)))

    @property
    def center(self) -> float:
        return self.a * self.b

    def matrix(self) -> np.ndarray:
        a, b, w = self.a, self.b, self.w
        return np.array([[1, a, b], [a, 1, w], [b, np.conj(w), 1]], dtype=complex)

    def to_original(self, v: np.ndarray) -> np.ndarray:
        """Map a canonical-frame vector back: θ = Pᵀ·D^H·v."""
        out = np.empty(3, dtype=complex)
        out[list(self.perm)] = np.conj(self.phases) * v
        return out


def _check_phase_matrix(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (3, 3):
        raise ValidationError(f"expected a 3 x 3 matrix, got {phi.shape}")
    if np.max(np.abs(phi - phi.conj().T)) > 1e-10:
        raise NotHermitian("matrix is not Hermitian")
    if np.max(np.abs(np.diag(phi) - 1.0)) > 1e-8:
        raise NotUnitDiagonal("diagonal entries must equal 1")
    if linalg.eigvalsh(0.5 * (phi + phi.conj().T))[0] < -1e-8:
        raise NotPsd("matrix is not positive semidefinite")
    return 0.5 * (phi + phi.conj().T)


def canonicalize(phi: np.ndarray) -> Canonical:
    """Permute and rephase so that φ'12 = a and φ'13 = b are real with a ≤ b."""
    phi = _check_phase_matrix(phi)
    perm = (0, 1, 2) if abs(phi[0, 1]) <= abs(phi[0, 2]) else (0, 2, 1)
    p = phi[np.ix_(perm, perm)]
    phases = np.array([1.0, np.exp(1j * np.angle(p[0, 1])), np.exp(1j * np.angle(p[0, 2]))])
    q = phases[:, None] * p * np.conj(phases)[None, :]
    a = min(1.0, abs(q[0, 1]))
    b = min(1.0, abs(q[0, 2]))
    return Canonical(perm=perm, phases=phases, a=a, b=b, w=complex(q[1, 2]))


def chord_product(a: float, phi: float) -> float:
    """AR·AS for the unit-circle chord through the real point a in direction φ."""
    ar, as_ = _chord(a, phi)
    return ar * as_


def _chord(a: float, phi: float) -> tuple[float, float]:
    q = math.sqrt(max(0.0, 1.0 - (a * math.sin(phi)) ** 2))
    return -a * math.cos(phi) + q, a * math.cos(phi) + q


def _chord_pair(a: float, b: float, phi1: float) -> tuple[float, float, float]:
    """(λ, ρ, φ2) for a chord through a in direction φ1 and the matching chord through b."""
    ar, as_ = _chord(a, phi1)
    lam = as_ / (ar + as_)
    rho = math.sqrt((1.0 - lam) / lam * (1.0 - b**2))
    cos_phi2 = (1.0 - b**2 - rho**2) / (2.0 * b * rho)
    return lam, rho, math.acos(min(1.0, max(-1.0, cos_phi2)))


def _dyads_canonical(can: Canonical) -> tuple[np.ndarray, np.ndarray, float]:
    """Unit-modulus v1, v2 and λ with Φ' = λ·v1v1^H + (1 − λ)·v2v2^H."""
    a, b = can.a, can.b
    if a >= 1.0 - 1e-12:
        v = np.ones(3, dtype=complex)
        return v, v, 1.0

    if b >= 1.0 - 1e-12:
        ar, as_ = _chord(a, 0.5 * math.pi)
        lam = as_ / (ar + as_)
        e_alpha = a + 1j * ar
        e_gamma = a - 1j * as_
        v1 = np.array([1.0, np.conj(e_alpha), 1.0])
        v2 = np.array([1.0, np.conj(e_gamma), 1.0])
        return v1, v2, lam

    target = float(np.angle(can.w - can.center))
    if b <= 1e-12:
        v1 = np.array([1.0, 1.0, np.exp(-1j * target)])
        v2 = np.array([1.0, -1.0, -np.exp(-1j * target)])
        return v1, v2, 0.5

    def offset(phi1: float) -> float:
        return _chord_pair(a, b, phi1)[2] - phi1

    d0 = offset(0.0)
    rep = d0 - ((d0 - target) % (2.0 * math.pi))
    if abs(d0 - rep) < 1e-15:
        phi1 = 0.0
    else:
        phi1 = optimize.brentq(lambda p: offset(p) - rep, 0.0, 2.0 * math.pi, xtol=1e-15)

    lam, rho, phi2 = _chord_pair(a, b, phi1)
    ar, as_ = _chord(a, phi1)
    e_alpha = a + ar * np.exp(1j * phi1)
    e_gamma = a - as_ * np.exp(1j * phi1)
    e_beta = b + rho * np.exp(1j * phi2)
    e_delta = (b - lam * e_beta) / (1.0 - lam)
    v1 = np.array([1.0, np.conj(e_alpha), np.conj(e_beta)])
    v2 = np.array([1.0, np.conj(e_gamma), np.conj(e_delta)])
    return v1 / np.abs(v1), v2 / np.abs(v2), lam


def reconstruction_error(phi: np.ndarray, dyads: Sequence[tuple[float, np.ndarray]]) -> float:
    """‖Φ − Σ w_k θ_kθ_k^H‖_F."""
    approx = sum(w * np.outer(t, np.conj(t)) for w, t in dyads)
    return float(np.linalg.norm(np.asarray(phi) - approx))


def dyad_decompose(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Write a boundary 3 × 3 relaxed matrix as λθ1θ1^H + (1 − λ)θ2θ2^H.

    Args:
        phi: Hermitian PSD with unit diagonal and zero determinant.

    Returns:
        (θ1, θ2, λ) with unit-modulus θ's and λ ∈ [0, 1].

    Raises:
        NotUnitDiagonal: a diagonal entry differs from 1.
        NotBoundary: Φ lies strictly inside the PSD set.
    """
    can = canonicalize(phi)
    dist = abs(can.w - can.center)
    if can.radius - dist > _BOUNDARY_TOL:
        raise NotBoundary(f"matrix is interior: |w - ab| = {dist:.3e} < {can.radius:.3e}")
    v1, v2, lam = _dyads_canonical(can)
    theta1, theta2 = can.to_original(v1), can.to_original(v2)
    err = reconstruction_error(phi, [(lam, theta1), (1.0 - lam, theta2)])
    if err > 1e-8:
        logger.warning("Dyad decomposition reconstruction error %.2e", err)
    return theta1, theta2, lam


def decompose_into_dyads(phi: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Convex combination of unit-modulus dyads equal to any 3 × 3 relaxed matrix.

    Boundary matrices give two dyads. Interior matrices are first split
    along the horizontal chord of their admissible circle into two boundary
    matrices, giving four.
    """
    can = canonicalize(phi)
    dist = abs(can.w - can.center)
    if can.radius - dist <= _BOUNDARY_TOL:
        t1, t2, lam = dyad_decompose(phi)
        return [(lam, t1), (1.0 - lam, t2)]

    rel = can.w - can.center
    half = math.sqrt(max(0.0, can.radius**2 - rel.imag**2))
    mu = (rel.real + half) / (2.0 * half)
    out: list[tuple[float, np.ndarray]] = []
    for weight, w in ((mu, can.center + half + 1j * rel.imag),
                      (1.0 - mu, can.center - half + 1j * rel.imag)):
        part = Canonical(perm=can.perm, phases=can.phases, a=can.a, b=can.b, w=w)
        v1, v2, lam = _dyads_canonical(part)
        out.append((weight * lam, part.to_original(v1)))
        out.append((weight * (1.0 - lam), part.to_original(v2)))
    logger.debug("Interior matrix split into %d dyads", len(out))
    return out


def canonical_matrix(a: float, b: float, w: complex) -> np.ndarray:
    """[[1, a, b], [a, 1, w], [b, w̄, 1]]."""
    return Canonical(perm=(0, 1, 2), phases=np.ones(3, dtype=complex), a=a, b=b, w=w).matrix()


def relaxed_phase_matrix(embedded: np.ndarray) -> np.ndarray:
    """Complex Φ from the embedded relaxation matrix of an SLCP result."""
    return complex_from_embedding(embedded)
