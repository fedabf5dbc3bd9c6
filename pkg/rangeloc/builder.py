"""SDP problem builder: block-structured conic programs as plain data.

Every relaxation in the package is assembled here as an :class:`SdpProblem`
(PSD blocks, free variables, affine constraints and LMIs) and only then
handed to :func:`rangeloc.sdp.solve_sdp`. Keeping the model as data lets a
problem be validated, dumped to JSON and cross-checked independently of the
conic backend.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from rangeloc.errors import DimensionMismatch, ValidationError

logger = logging.getLogger(__name__)

Sense = Literal["==", ">=", "<="]
Goal = Literal["maximize", "minimize"]


# ── Affine expressions ────────────────────────────────────────────────


@dataclass(frozen=True)
class Term:
    """``left @ X @ right.T`` for a declared variable X.

    With ``inner`` set the term is instead the scalar ⟨inner, X⟩ = Σ inner_ij X_ij,
    returned as a 1 × 1 block.
    """

    var: str
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    inner: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        if self.inner is not None:
            return (1, 1)
        return (self.left.shape[0], self.right.shape[0])

    def scaled(self, coef: float) -> Term:
        if self.inner is not None:
            return Term(self.var, inner=coef * self.inner)
        return Term(self.var, left=coef * self.left, right=self.right)


@dataclass(frozen=True)
class AffineExpr:
    """Constant matrix plus a sum of variable terms, all of one shape."""

    constant: np.ndarray
    terms: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        constant = np.atleast_2d(np.asarray(self.constant, dtype=float))
        object.__setattr__(self, "constant", constant)
        for term in self.terms:
            if term.shape != constant.shape:
                raise DimensionMismatch(
                    f"term on '{term.var}' has shape {term.shape}, expression {constant.shape}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.constant.shape

    @classmethod
    def zeros(cls, rows: int, cols: int) -> AffineExpr:
        return cls(np.zeros((rows, cols)))

    @classmethod
    def of(cls, *terms: Term, constant: Any = None) -> AffineExpr:
        if not terms and constant is None:
            raise ValidationError("empty affine expression")
        shape = terms[0].shape if terms else np.atleast_2d(constant).shape
        const = np.zeros(shape) if constant is None else np.broadcast_to(
            np.asarray(constant, dtype=float), shape
        )
        return cls(const, tuple(terms))

    def __add__(self, other: AffineExpr) -> AffineExpr:
        if self.shape != other.shape:
            raise DimensionMismatch(f"cannot add {self.shape} and {other.shape}")
        return AffineExpr(self.constant + other.constant, self.terms + other.terms)

    def __neg__(self) -> AffineExpr:
        return self * -1.0

    def __sub__(self, other: AffineExpr) -> AffineExpr:
        return self + (-other)

    def __mul__(self, coef: float) -> AffineExpr:
        return AffineExpr(coef * self.constant, tuple(t.scaled(coef) for t in self.terms))

    __rmul__ = __mul__

    def variables(self) -> set[str]:
        return {t.var for t in self.terms}

    def evaluate(self, values: dict[str, np.ndarray]) -> np.ndarray:
        """Value of the expression at a given assignment of every variable."""
        out = self.constant.copy()
        for t in self.terms:
            x = values[t.var]
            if t.inner is not None:
                out += np.sum(t.inner * x)
            else:
                out += t.left @ x @ t.right.T
        return out


def congruence(var: str, left: np.ndarray, right: np.ndarray | None = None) -> AffineExpr:
    """left @ X @ right.T (right defaults to left)."""
    left = np.atleast_2d(np.asarray(left, dtype=float))
    right = left if right is None else np.atleast_2d(np.asarray(right, dtype=float))
    return AffineExpr.of(Term(var, left=left, right=right))


def inner(var: str, coef: np.ndarray) -> AffineExpr:
    """Scalar ⟨coef, X⟩."""
    return AffineExpr.of(Term(var, inner=np.atleast_2d(np.asarray(coef, dtype=float))))


def entry(var: str, i: int, j: int, size: tuple[int, int], coef: float = 1.0) -> AffineExpr:
    """Scalar coef · X[i, j] for a variable of the given size."""
    c = np.zeros(size)
    c[i, j] = coef
    return inner(var, c)


def block(var: str, rows: slice | list[int], cols: slice | list[int],
          size: tuple[int, int]) -> AffineExpr:
    """Sub-block X[rows, cols] as an affine expression."""
    left = np.eye(size[0])[rows]
    right = np.eye(size[1])[cols]
    return congruence(var, left, right)


def diagonal(var: str, cells: list[tuple[int, int]], size: tuple[int, int]) -> AffineExpr:
    """Diagonal matrix whose k-th diagonal entry is X[cells[k]]."""
    k = len(cells)
    terms = []
    for p, (i, j) in enumerate(cells):
        left = np.zeros((k, size[0]))
        right = np.zeros((k, size[1]))
        left[p, i] = 1.0
        right[p, j] = 1.0
        terms.append(Term(var, left=left, right=right))
    return AffineExpr.of(*terms)


def trace(var: str, size: int, coef: np.ndarray | None = None) -> AffineExpr:
    """tr(coef · X); plain trace when coef is omitted."""
    c = np.eye(size) if coef is None else np.asarray(coef, dtype=float).T
    return inner(var, c)


def constant(value: Any) -> AffineExpr:
    return AffineExpr(np.atleast_2d(np.asarray(value, dtype=float)))


# ── Problem records ───────────────────────────────────────────────────


@dataclass(frozen=True)
class LinearConstraint:
    """Elementwise ``expr <sense> 0``."""

    expr: AffineExpr
    sense: Sense
    label: str = ""


@dataclass(frozen=True)
class LmiConstraint:
    """Block matrix of affine expressions required to be PSD."""

    blocks: tuple[tuple[AffineExpr, ...], ...]
    label: str = ""

    @property
    def size(self) -> int:
        return sum(row[0].shape[0] for row in self.blocks)

    def evaluate(self, values: dict[str, np.ndarray]) -> np.ndarray:
        return np.block([[b.evaluate(values) for b in row] for row in self.blocks])


@dataclass(frozen=True)
class SdpProblem:
    """A validated block SDP: PSD blocks, free variables, objective, constraints."""

    name: str
    psd_blocks: dict[str, int]
    free_vars: dict[str, tuple[int, int]]
    objective: AffineExpr
    goal: Goal
    constraints: tuple[LinearConstraint, ...] = ()
    lmi_constraints: tuple[LmiConstraint, ...] = ()

    def shape_of(self, var: str) -> tuple[int, int]:
        if var in self.psd_blocks:
            k = self.psd_blocks[var]
            return (k, k)
        return self.free_vars[var]

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dump: blocks, objective and constraints as (var, i, j, coef) triplets."""
        return {
            "name": self.name,
            "goal": self.goal,
            "psd_blocks": [{"name": k, "size": v} for k, v in self.psd_blocks.items()],
            "free_vars": [{"name": k, "shape": list(v)} for k, v in self.free_vars.items()],
            "objective": _expr_to_dict(self.objective),
            "constraints": [
                {"label": c.label, "sense": c.sense, "expr": _expr_to_dict(c.expr)}
                for c in self.constraints
            ],
            "lmi_constraints": [
                {
                    "label": lmi.label,
                    "size": lmi.size,
                    "blocks": [[_expr_to_dict(b) for b in row] for row in lmi.blocks],
                }
                for lmi in self.lmi_constraints
            ],
        }

    def dump_json(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        logger.debug("Dumped SDP '%s' to %s", self.name, path)
        return path


def _expr_to_dict(expr: AffineExpr) -> dict[str, Any]:
    """Expand every entry of ``expr`` into sparse (var, i, j, coef) triplets."""
    rows, cols = expr.shape
    entries = []
    for p in range(rows):
        for q in range(cols):
            triplets: dict[tuple[str, int, int], float] = {}
            for t in expr.terms:
                if t.inner is not None:
                    coef = t.inner
                else:
                    coef = np.outer(t.left[p], t.right[q])
                for i, j in zip(*np.nonzero(coef)):
                    key = (t.var, int(i), int(j))
                    triplets[key] = triplets.get(key, 0.0) + float(coef[i, j])
            entries.append({
                "row": p,
                "col": q,
                "constant": float(expr.constant[p, q]),
                "triplets": [[v, i, j, c] for (v, i, j), c in triplets.items() if c != 0.0],
            })
    return {"shape": [rows, cols], "entries": entries}


# ── Builder ───────────────────────────────────────────────────────────


class ProblemBuilder:
    """Builds an :class:`SdpProblem` incrementally.

    Handles:
    - Variable declaration (PSD blocks and free matrices, unique names)
    - Reference validation (every term names a declared variable of the right size)
    - LMI block-shape consistency

    Usage:
        b = ProblemBuilder("toy")
        b.add_psd_block("X", 1)
        b.add_constraint(entry("X", 0, 0, (1, 1)) - constant(1.0), "==")
        b.set_objective(trace("X", 1), "maximize")
        problem = b.build()
    """

    def __init__(self, name: str) -> None:
        self._name = name
        self._psd: dict[str, int] = {}
        self._free: dict[str, tuple[int, int]] = {}
        self._constraints: list[LinearConstraint] = []
        self._lmis: list[LmiConstraint] = []
        self._objective: AffineExpr | None = None
        self._goal: Goal = "maximize"

    def add_psd_block(self, name: str, size: int) -> str:
        self._declare(name)
        if size < 1:
            raise ValidationError(f"block '{name}' must have size >= 1")
        self._psd[name] = size
        return name

    def add_free(self, name: str, shape: tuple[int, int] = (1, 1)) -> str:
        self._declare(name)
        self._free[name] = shape
        return name

    def add_constraint(self, expr: AffineExpr, sense: Sense, label: str = "") -> None:
        self._check(expr)
        self._constraints.append(LinearConstraint(expr, sense, label))

    def add_lmi(self, blocks: list[list[AffineExpr | None]], label: str = "") -> None:
        """Require the block matrix to be PSD; ``None`` entries are zero blocks."""
        heights = [self._row_height(row) for row in blocks]
        widths = heights
        filled: list[tuple[AffineExpr, ...]] = []
        for p, row in enumerate(blocks):
            if len(row) != len(blocks):
                raise DimensionMismatch(f"LMI '{label}' is not square in blocks")
            out = []
            for q, b in enumerate(row):
                if b is None:
                    b = AffineExpr.zeros(heights[p], widths[q])
                if b.shape != (heights[p], widths[q]):
                    raise DimensionMismatch(
                        f"LMI '{label}' block ({p},{q}) has shape {b.shape}, "
                        f"expected {(heights[p], widths[q])}"
                    )
                self._check(b)
                out.append(b)
            filled.append(tuple(out))
        self._lmis.append(LmiConstraint(tuple(filled), label))

    def set_objective(self, expr: AffineExpr, goal: Goal) -> None:
        if expr.shape != (1, 1):
            raise DimensionMismatch(f"objective must be scalar, got {expr.shape}")
        self._check(expr)
        self._objective = expr
        self._goal = goal

    def build(self) -> SdpProblem:
        """Return the validated problem."""
        if self._objective is None:
            raise ValidationError(f"problem '{self._name}' has no objective")
        problem = SdpProblem(
            name=self._name,
            psd_blocks=dict(self._psd),
            free_vars=dict(self._free),
            objective=self._objective,
            goal=self._goal,
            constraints=tuple(self._constraints),
            lmi_constraints=tuple(self._lmis),
        )
        logger.debug(
            "SDP '%s' built: %d PSD blocks, %d free vars, %d constraints, %d LMIs",
            self._name, len(self._psd), len(self._free),
            len(self._constraints), len(self._lmis),
        )
        return problem

    # ── internals ──

    def _declare(self, name: str) -> None:
        if name in self._psd or name in self._free:
            raise ValidationError(f"variable '{name}' declared twice")

    def _shape(self, var: str) -> tuple[int, int]:
        if var in self._psd:
            return (self._psd[var], self._psd[var])
        if var in self._free:
            return self._free[var]
        raise ValidationError(f"undeclared variable '{var}'")

    def _check(self, expr: AffineExpr) -> None:
        for t in expr.terms:
            k, l = self._shape(t.var)
            if t.inner is not None:
                ok = t.inner.shape == (k, l)
            else:
                ok = t.left.shape[1] == k and t.right.shape[1] == l
            if not ok:
                raise DimensionMismatch(f"term does not fit variable '{t.var}' of shape {(k, l)}")

    @staticmethod
    def _row_height(row: list[AffineExpr | None]) -> int:
        for b in row:
            if b is not None:
                return b.shape[0]
        raise DimensionMismatch("LMI block row has no non-zero block")
