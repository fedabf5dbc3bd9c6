"""Conic backend for :class:`~rangeloc.builder.SdpProblem` plus matrix helpers.

``solve_sdp`` translates a problem into cvxpy and solves it with an
interior-point backend (CLARABEL by default, SCS selectable). The
Hermitian embedding lets complex PSD programs run on a real-cone solver.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy import linalg

from rangeloc.builder import AffineExpr, SdpProblem
from rangeloc.config import SolverSettings
from rangeloc.core import SolverStatus, eig_ratio
from rangeloc.errors import (
    Infeasible,
    NotHermitian,
    NotPsd,
    NumericalFailure,
    Unbounded,
    ValidationError,
)

logger = logging.getLogger(__name__)

_OPTIMAL_SLACK = 10.0


@dataclass(frozen=True)
class Residuals:
    """Relative checks of the returned point.

    ``primal`` is the largest constraint or cone violation, ``dual`` the
    largest sign or PSD violation of the returned multipliers, each relative
    to the magnitude of what it measures. ``gap`` is the duality gap, i.e. the
    total complementarity relative to 1 + |objective|.
    """

    primal: float
    dual: float
    gap: float


@dataclass(frozen=True)
class SdpSolution:
    """Solver output: symmetric block values, free values, status and residuals."""

    block_values: dict[str, np.ndarray]
    free_values: dict[str, np.ndarray]
    objective_value: float
    status: SolverStatus
    residuals: Residuals
    solve_time: float = 0.0
    iterations: int = 0
    lmi_values: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def scalar(self, name: str) -> float:
        return float(np.asarray(self.free_values[name]).reshape(-1)[0])

    def value(self, name: str) -> np.ndarray:
        if name in self.block_values:
            return self.block_values[name]
        return self.free_values[name]


# ── Backend translation ───────────────────────────────────────────────


def _lower(expr: AffineExpr, variables: dict[str, cp.Variable]) -> cp.Expression:
    out: cp.Expression = cp.Constant(expr.constant)
    for t in expr.terms:
        x = variables[t.var]
        if t.inner is not None:
            piece = cp.reshape(cp.sum(cp.multiply(t.inner, x)), (1, 1), order="F")
        else:
            piece = t.left @ x @ t.right.T
        out = out + piece
    return out


def _solver_options(settings: SolverSettings) -> dict[str, float | int]:
    if settings.solver == "CLARABEL":
        return {
            "tol_gap_abs": settings.tolerance,
            "tol_gap_rel": settings.tolerance,
            "tol_feas": settings.tolerance,
            "max_iter": settings.max_iters,
        }
    return {
        "eps_abs": settings.tolerance,
        "eps_rel": settings.tolerance,
        "max_iters": settings.max_iters,
    }


def _violation(value: np.ndarray, sense: str) -> float:
    if sense == "==":
        return float(np.max(np.abs(value)))
    if sense == ">=":
        return float(max(0.0, -np.min(value)))
    return float(max(0.0, np.max(value)))


def _psd_violation(matrix: np.ndarray) -> float:
    """Negative part of the smallest eigenvalue relative to 1 + the spectral radius."""
    eig = linalg.eigvalsh(0.5 * (matrix + matrix.T))
    return float(max(0.0, -eig[0]) / (1.0 + max(abs(eig[0]), abs(eig[-1]))))


def solve_sdp(problem: SdpProblem, settings: SolverSettings | None = None) -> SdpSolution:
    """Solve a block SDP.

    Args:
        problem: Validated problem from :class:`~rangeloc.builder.ProblemBuilder`.
        settings: Backend choice and tolerances; defaults when omitted.

    Returns:
        Solution with status ``Optimal`` when the backend reports optimality
        and the relative primal and multiplier violations and the duality gap
        are all within ten times ``settings.tolerance``, ``Inaccurate`` when
        they are within ``settings.inaccurate_tolerance``.

    Raises:
        Infeasible: backend certified primal infeasibility.
        Unbounded: backend certified unboundedness.
        NumericalFailure: backend error, no point, or residuals beyond the
            inaccurate tolerance.
    """
    settings = settings or SolverSettings()
    variables: dict[str, cp.Variable] = {}
    psd_cons: list[cp.Constraint] = []
    constraints: list[cp.Constraint] = []

    for name, size in problem.psd_blocks.items():
        x = cp.Variable((size, size), symmetric=True, name=name)
        variables[name] = x
        psd_cons.append(x >> 0)
    for name, shape in problem.free_vars.items():
        variables[name] = cp.Variable(shape, name=name)

    for con in problem.constraints:
        lowered = _lower(con.expr, variables)
        if con.sense == "==":
            constraints.append(lowered == 0)
        elif con.sense == ">=":
            constraints.append(lowered >= 0)
        else:
            constraints.append(lowered <= 0)

    slacks: list[cp.Variable] = []
    for k, lmi in enumerate(problem.lmi_constraints):
        s = cp.Variable((lmi.size, lmi.size), symmetric=True, name=f"lmi{k}")
        slacks.append(s)
        bmat = cp.bmat([[_lower(b, variables) for b in row] for row in lmi.blocks])
        constraints.append(s == bmat)
        psd_cons.append(s >> 0)

    objective = cp.sum(_lower(problem.objective, variables))
    goal = cp.Maximize(objective) if problem.goal == "maximize" else cp.Minimize(objective)
    prob = cp.Problem(goal, constraints + psd_cons)

    started = time.perf_counter()
    try:
        prob.solve(solver=settings.solver, verbose=settings.verbose, **_solver_options(settings))
    except cp.error.SolverError as e:
        raise NumericalFailure(f"{problem.name}: {e}", status="solver_error") from e
    elapsed = time.perf_counter() - started

    status = prob.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible(f"{problem.name}: infeasible", status=status)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise Unbounded(f"{problem.name}: unbounded", status=status)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or prob.value is None:
        raise NumericalFailure(f"{problem.name}: backend status {status}", status=str(status))

    if any(v.value is None for v in variables.values()):
        raise NumericalFailure(f"{problem.name}: no primal point returned", status=str(status))
    values = {name: np.asarray(v.value, dtype=float) for name, v in variables.items()}
    blocks = {name: 0.5 * (values[name] + values[name].T) for name in problem.psd_blocks}
    free = {name: values[name].reshape(problem.free_vars[name]) for name in problem.free_vars}
    assignment = {**blocks, **free}

    linear_cons = constraints[: len(problem.constraints)]
    residuals = _residuals(problem, assignment, linear_cons, psd_cons, prob.value)
    worst = max(residuals.primal, residuals.dual, residuals.gap)

    mapped = SolverStatus.OPTIMAL if status == cp.OPTIMAL else SolverStatus.INACCURATE
    if mapped == SolverStatus.OPTIMAL and worst > _OPTIMAL_SLACK * settings.tolerance:
        mapped = SolverStatus.INACCURATE
    if worst > settings.inaccurate_tolerance:
        raise NumericalFailure(
            f"{problem.name}: relative residual {worst:.2e} "
            f"above {settings.inaccurate_tolerance:g}",
            status=str(status),
        )

    stats = prob.solver_stats
    iterations = int(stats.num_iters) if stats is not None and stats.num_iters is not None else 0
    logger.debug(
        "SDP '%s' solved by %s: status=%s objective=%.6g residuals=(%.1e, %.1e, %.1e) in %.3fs",
        problem.name, settings.solver, mapped, prob.value,
        residuals.primal, residuals.dual, residuals.gap, elapsed,
    )
    return SdpSolution(
        block_values=blocks,
        free_values=free,
        objective_value=float(prob.value),
        status=mapped,
        residuals=residuals,
        solve_time=elapsed,
        iterations=iterations,
        lmi_values=tuple(lmi.evaluate(assignment) for lmi in problem.lmi_constraints),
    )


def _residuals(problem: SdpProblem, assignment: dict[str, np.ndarray],
               linear_cons: list[cp.Constraint], psd_cons: list[cp.Constraint],
               objective: float) -> Residuals:
    scale = 1.0 + max((float(np.max(np.abs(v))) for v in assignment.values()), default=0.0)
    primal = 0.0
    for con in problem.constraints:
        primal = max(primal, _violation(con.expr.evaluate(assignment), con.sense) / scale)
    for name in problem.psd_blocks:
        primal = max(primal, _psd_violation(assignment[name]))
    for lmi in problem.lmi_constraints:
        primal = max(primal, _psd_violation(lmi.evaluate(assignment)))

    dual = 0.0
    complementarity = 0.0
    for con, lowered in zip(problem.constraints, linear_cons, strict=True):
        if con.sense == "==" or lowered.dual_value is None:
            continue
        mu = np.ravel(np.asarray(lowered.dual_value, dtype=float))
        value = np.ravel(con.expr.evaluate(assignment))
        slack = value if con.sense == ">=" else -value
        dual = max(dual, float(max(0.0, -np.min(mu))) / (1.0 + float(np.max(np.abs(mu)))))
        complementarity += float(mu @ slack)
    for con in psd_cons:
        z = con.dual_value
        if z is None:
            continue
        z = np.asarray(z, dtype=float)
        dual = max(dual, _psd_violation(z))
        x = np.asarray(con.args[0].value, dtype=float)
        complementarity += float(np.sum(x * z))
    gap = abs(complementarity) / (1.0 + abs(objective))
    return Residuals(primal=primal, dual=dual, gap=gap)


# ── Hermitian embedding ───────────────────────────────────────────────


def hermitian_embed(H: np.ndarray) -> np.ndarray:
    """[[Re H, −Im H], [Im H, Re H]], real symmetric of twice the size.

    Raises:
        NotHermitian: H deviates from its conjugate transpose.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {H.shape}")
    tol = 1e-12 * max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol:
        raise NotHermitian("matrix is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def complex_from_embedding(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hermitian_embed`, averaging the two redundant copies."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
        raise ValidationError(f"embedding must be square of even size, got {S.shape}")
    m = S.shape[0] // 2
    s11, s12 = S[:m, :m], S[:m, m:]
    s21, s22 = S[m:, :m], S[m:, m:]
    return 0.5 * (s11 + s22) + 0.5j * (s21 - s12)


# ── Factorization ─────────────────────────────────────────────────────


def top_k_factor(sym: np.ndarray, k: int) -> tuple[np.ndarray, float]:
    """Rank-k factor F = [√λ₁u₁ … √λ_k u_k] of a PSD (or Hermitian PSD) matrix.

    Returns:
        (F, eig_ratio) where eig_ratio = λ_k/λ_{k+1}, capped at 1e16; a matrix
        of rank k up to round-off returns the cap.

    Raises:
        NotPsd: an eigenvalue is below −1e−8·λ₁.
    """
    sym = np.asarray(sym)
    size = sym.shape[0]
    if not 1 <= k <= size:
        raise ValidationError(f"k must be in [1, {size}], got {k}")
    eigvals, eigvecs = linalg.eigh(0.5 * (sym + sym.conj().T))
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    top = max(float(eigvals[0]), 0.0)
    if eigvals[-1] < -1e-8 * (top if top > 0 else 1e-4):
        raise NotPsd(f"minimum eigenvalue {eigvals[-1]:.3e} with maximum {top:.3e}")
    factor = eigvecs[:, :k] * np.sqrt(np.clip(eigvals[:k], 0.0, None))
    return factor, eig_ratio(eigvals, k)
