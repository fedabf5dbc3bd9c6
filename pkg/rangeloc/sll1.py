"""Laplacian-ML (outlier-robust) localization.

The ℓ1 range cost is rewritten as a weighted least-squares problem over a
simplex of weights λ. Three solvers are provided:

- ``sll1_ad`` alternates a weighted nuclear-norm relaxation with the
  closed-form λ update.
- ``sll1_md`` relaxes the joint problem with one epigraph variable per
  coordinate and a nuclear-norm penalty on the linearized weights β.
- ``sll1_sd`` uses a single epigraph variable and a smaller matrix variable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from rangeloc.builder import (
    ProblemBuilder,
    SdpProblem,
    block,
    congruence,
    constant,
    diagonal,
    entry,
    inner,
    trace,
)
from rangeloc.config import AlgorithmSettings, Sll1Settings
from rangeloc.core import (
    AnchorSet,
    LocalizationResult,
    RangeVector,
    SolverStatus,
    check_compatible,
    project_to_spheres,
    refine_position,
    residuals,
    weighted_centroid,
    worst_status,
)
from rangeloc.errors import ConvergenceWarning, NonConvergence, ValidationError, warn
from rangeloc.sdp import SdpSolution, solve_sdp, top_k_factor
from rangeloc.slnn import Recovery, SlnnData, recover_from_gram, rows_to_unit, slnn_problem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightVector:
    """Strictly positive weights on the simplex."""

    lam: np.ndarray

    def __post_init__(self) -> None:
        lam = np.array(self.lam, dtype=float).reshape(-1)
        if lam.size == 0 or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("weights must be finite and > 0")
        if abs(lam.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {lam.sum():.12g}")
        lam = lam / lam.sum()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, m: int) -> WeightVector:
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def normalized(cls, values: np.ndarray) -> WeightVector:
        values = np.asarray(values, dtype=float)
        return cls(values / values.sum())

    def __len__(self) -> int:
        return int(self.lam.size)


def weights_to_projector(weights: WeightVector) -> np.ndarray:
    """Ξ = Λ⁻¹ − Λ⁻¹𝟙(𝟙ᵀΛ⁻¹𝟙)⁻¹𝟙ᵀΛ⁻¹."""
    inv = 1.0 / weights.lam
    return np.diag(inv) - np.outer(inv, inv) / inv.sum()


def lambda_update(
    x: np.ndarray,
    anchors: AnchorSet,
    ranges: RangeVector,
    floor: float = 1e-8,
) -> WeightVector:
    """λ_i = K_i / Σ_j K_j with K_i = |‖x − a_i‖ − r_i|.

    Residuals below ``floor`` are raised to it before normalizing, so all
    weights stay positive; an all-zero residual vector gives uniform weights.
    """
    k = np.maximum(residuals(x, anchors, ranges), floor)
    return WeightVector.normalized(k)


def weighted_cost(x: np.ndarray, anchors: AnchorSet, ranges: RangeVector,
                  weights: WeightVector) -> float:
    """Σ K_i²/λ_i."""
    k = residuals(x, anchors, ranges)
    return float(np.sum(k**2 / weights.lam))


# ── Weighted nuclear-norm relaxation ──────────────────────────────────


def build_weighted(anchors: AnchorSet, ranges: RangeVector, weights: WeightVector) -> SlnnData:
    """C = RΞA, r = R·(1/λ), κ = Σ1/λ_i."""
    check_compatible(anchors, ranges)
    if len(weights) != anchors.m:
        raise ValidationError(f"{anchors.m} anchors but {len(weights)} weights")
    xi = weights_to_projector(weights)
    R = np.diag(ranges.r)
    inv = 1.0 / weights.lam
    return SlnnData(
        A=anchors.positions.copy(),
        R=R,
        C=R @ xi @ anchors.positions,
        r=ranges.r * inv,
        Pi=xi,
        kappa=float(inv.sum()),
    )


def _weighted_solve(anchors: AnchorSet, ranges: RangeVector, weights: WeightVector,
                    settings: AlgorithmSettings) -> tuple[Recovery, SdpSolution]:
    data = build_weighted(anchors, ranges, weights)
    solution = solve_sdp(slnn_problem(data, "weighted-slnn"), settings.solver)
    rec = recover_from_gram(solution.block_values["W"], anchors, ranges, data, weights.lam)
    return rec, solution


def solve_weighted_slnn(
    anchors: AnchorSet,
    ranges: RangeVector,
    weights: WeightVector,
    settings: AlgorithmSettings | None = None,
) -> np.ndarray:
    """Position minimizing the relaxed Σ‖x − y_i‖²/λ_i for fixed weights."""
    rec, _ = _weighted_solve(anchors, ranges, weights, settings or AlgorithmSettings())
    return rec.position


# ── Alternating directions ────────────────────────────────────────────


def _polished_step(x: np.ndarray, previous: np.ndarray | None, anchors: AnchorSet,
                   ranges: RangeVector, weights: WeightVector,
                   settings: AlgorithmSettings) -> np.ndarray:
    """Weighted-cost polish of the relaxed step, never worse than the previous iterate."""
    budget = settings.refine.max_nfev
    best = refine_position(x, anchors, ranges, "gaussian", budget, weights.lam)
    if previous is not None:
        fallback = refine_position(previous, anchors, ranges, "gaussian", budget, weights.lam)
        if (weighted_cost(fallback, anchors, ranges, weights)
                < weighted_cost(best, anchors, ranges, weights)):
            best = fallback
    return best


def sll1_ad(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
    strict: bool = False,
) -> LocalizationResult:
    """Block coordinate descent between the weighted relaxation and λ.

    Starts from uniform weights and stops once ‖x^{k+1} − x^k‖ < ε, when the
    total residual vanishes, or after ``max_iters`` solves. The cost
    (Σ K_i)² reached after every λ update is kept in ``cost_history``; with
    ``settings.refine`` enabled every x-step is polished on Σ K_i²/λ_i, which
    keeps that history non-increasing.

    Raises:
        NonConvergence: ``strict`` is set and the iteration cap was hit.
    """
    settings = settings or AlgorithmSettings()
    opts = settings.sll1
    weights = WeightVector.uniform(anchors.m)
    previous: np.ndarray | None = None
    history: list[float] = []
    statuses: list[SolverStatus] = []
    elapsed = 0.0
    converged = False

    for iteration in range(1, opts.max_iters + 1):
        rec, solution = _weighted_solve(anchors, ranges, weights, settings)
        statuses.append(solution.status)
        elapsed += solution.solve_time
        x = rec.position
        if settings.refine.enabled:
            x = _polished_step(x, previous, anchors, ranges, weights, settings)
        k = residuals(x, anchors, ranges)
        history.append(float(k.sum() ** 2))
        step = np.inf if previous is None else float(np.linalg.norm(x - previous))
        logger.debug("SL-l1 AD iteration %d: step=%.3e cost=%.6g", iteration, step, history[-1])
        if step < opts.epsilon or k.sum() < opts.residual_floor:
            converged = True
            break
        weights = lambda_update(x, anchors, ranges, opts.residual_floor)
        previous = x

    if not converged:
        message = f"SL-l1 AD stopped after {opts.max_iters} iterations without converging"
        if strict:
            raise NonConvergence(message)
        warn(message, ConvergenceWarning, logger)

    if settings.refine.enabled:
        x = refine_position(x, anchors, ranges, "laplacian", settings.refine.max_nfev)
    logger.info(
        "SL-l1 AD finished: m=%d n=%d iterations=%d converged=%s",
        anchors.m, anchors.n, iteration, converged,
    )
    return LocalizationResult(
        position=x,
        relaxation_matrix=solution.block_values["W"],
        eig_ratio=rec.eig_ratio,
        objective=solution.objective_value,
        solver_status=worst_status(*statuses),
        iterations=iteration,
        algorithm="sll1-ad",
        converged=converged,
        solve_time=elapsed,
        cost_history=tuple(history),
    )


# ── Non-iterative relaxations ─────────────────────────────────────────


def md_index(k: int, i: int, n: int) -> int:
    """Position of u_k[i] in the lifted vector [1, u_1ᵀ, …, u_mᵀ]."""
    return 1 + k * n + i


def sll1_md_problem(anchors: AnchorSet, ranges: RangeVector, opts: Sll1Settings) -> SdpProblem:
    """minimize 𝟙ᵀt + μ‖β‖_N over W, β, t with one LMI per coordinate.

    β is the off-diagonal block of an auxiliary PSD matrix N, so that
    ½tr(N) is the epigraph of ‖β‖_N.
    """
    m, n = anchors.m, anchors.n
    side = m * n + 1
    w_size = (side, side)
    nuc_size = (m + n, m + n)
    sigma = opts.effective_sigma
    R = np.diag(ranges.r)

    b = ProblemBuilder("sll1-md")
    b.add_psd_block("W", side)
    b.add_psd_block("N", m + n)
    b.add_free("t", (n, 1))

    b.add_constraint(entry("W", 0, 0, w_size) - constant(1.0), "==", "w00")
    for k in range(m):
        mask = np.zeros(w_size)
        for i in range(n):
            mask[md_index(k, i, n), md_index(k, i, n)] = 1.0
        b.add_constraint(inner("W", mask) - constant(1.0), "==", f"unit direction {k}")

    b.add_constraint(block("N", slice(0, m), slice(m, m + n), nuc_size) - constant(
        np.full((m, n), opts.beta_floor)), ">=", "beta positive")

    ones_m = np.ones((m, 1))
    for i in range(n):
        t_i = congruence("t", np.eye(n)[[i]], [[1.0]])
        beta_sum = congruence("N", np.hstack([np.ones((1, m)), np.zeros((1, n))]),
                              np.eye(m + n)[[m + i]])
        b.add_constraint(beta_sum - t_i, "==", f"beta column sum {i}")

        select = np.zeros((m + 1, side))
        select[0, 0] = 1.0
        for k in range(m):
            select[k + 1, md_index(k, i, n)] = 1.0
        G = np.hstack([anchors.positions[:, [i]], R]) @ select
        lifted = congruence("W", G)
        epigraph = congruence("t", sigma * ones_m @ np.eye(n)[[i]], ones_m)
        beta_diag = diagonal("N", [(k, m + i) for k in range(m)], nuc_size)
        b.add_lmi([[beta_diag + epigraph - lifted]], f"coordinate {i}")

    t_total = congruence("t", np.ones((1, n)), [[1.0]])
    b.set_objective(t_total + 0.5 * opts.mu * trace("N", m + n), "minimize")
    return b.build()


def sll1_sd_problem(anchors: AnchorSet, ranges: RangeVector, opts: Sll1Settings) -> SdpProblem:
    """minimize t over W ((n+m) × (n+m)), β, t with a single LMI."""
    m, n = anchors.m, anchors.n
    side = n + m
    w_size = (side, side)
    sigma = opts.effective_sigma
    G = np.hstack([anchors.positions, np.diag(ranges.r)])

    b = ProblemBuilder("sll1-sd")
    b.add_psd_block("W", side)
    b.add_free("beta", (m, 1))
    b.add_free("t")

    top = np.eye(side)[:n]
    b.add_constraint(congruence("W", top) - constant(np.eye(n)), "==", "identity block")
    for k in range(m):
        b.add_constraint(entry("W", n + k, n + k, w_size) - constant(1.0), "==", f"unit row {k}")
    b.add_constraint(congruence("beta", np.eye(m), [[1.0]]) - constant(
        np.full((m, 1), opts.beta_floor)), ">=", "beta positive")
    t = congruence("t", [[1.0]])
    b.add_constraint(congruence("beta", np.ones((1, m)), [[1.0]]) - t, "==", "beta sum")

    ones_m = np.ones((m, 1))
    beta_diag = diagonal("beta", [(k, 0) for k in range(m)], (m, 1))
    epigraph = congruence("t", sigma * ones_m, ones_m)
    b.add_lmi([[beta_diag + epigraph - congruence("W", G)]], "epigraph")
    b.set_objective(t, "minimize")
    return b.build()


def _finish(name: str, anchors: AnchorSet, ranges: RangeVector, U_raw: np.ndarray,
            weights: WeightVector, W: np.ndarray, k: int,
            solution: SdpSolution, settings: AlgorithmSettings) -> LocalizationResult:
    U = rows_to_unit(U_raw)
    Y = project_to_spheres(anchors, ranges, U)
    position = weighted_centroid(Y, weights.lam)
    if settings.refine.enabled:
        position = refine_position(position, anchors, ranges, "laplacian",
                                   settings.refine.max_nfev)
    _, ratio = top_k_factor(W, k)
    logger.info(
        "%s solved: m=%d n=%d status=%s eig_ratio=%.3g objective=%.6g",
        name, anchors.m, anchors.n, solution.status, ratio, solution.objective_value,
    )
    return LocalizationResult(
        position=position,
        relaxation_matrix=W,
        eig_ratio=ratio,
        objective=solution.objective_value,
        solver_status=solution.status,
        iterations=1,
        algorithm=name,
        solve_time=solution.solve_time,
    )


def sll1_md(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
) -> LocalizationResult:
    """Non-iterative relaxation with per-coordinate epigraphs.

    Directions come from the first row of W, weights from the row sums of β.
    """
    settings = settings or AlgorithmSettings()
    check_compatible(anchors, ranges)
    solution = solve_sdp(sll1_md_problem(anchors, ranges, settings.sll1), settings.solver)
    W = solution.block_values["W"]
    m, n = anchors.m, anchors.n
    beta = solution.block_values["N"][:m, m:]
    weights = WeightVector.normalized(np.maximum(beta.sum(axis=1), settings.sll1.beta_floor))
    U_raw = W[0, 1:].reshape(m, n)
    return _finish("sll1-md", anchors, ranges, U_raw, weights, W, 1, solution, settings)


def sll1_sd(
    anchors: AnchorSet,
    ranges: RangeVector,
    settings: AlgorithmSettings | None = None,
) -> LocalizationResult:
    """Non-iterative relaxation with a single epigraph variable.

    Directions come from the lower-left block of W, weights from β/t.
    """
    settings = settings or AlgorithmSettings()
    check_compatible(anchors, ranges)
    solution = solve_sdp(sll1_sd_problem(anchors, ranges, settings.sll1), settings.solver)
    W = solution.block_values["W"]
    n = anchors.n
    beta = solution.free_values["beta"].reshape(-1)
    weights = WeightVector.normalized(np.maximum(beta, settings.sll1.beta_floor))
    U_raw = W[n:, :n]
    return _finish("sll1-sd", anchors, ranges, U_raw, weights, W, n, solution, settings)
