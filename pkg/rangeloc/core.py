"""Domain types, scenario generation, noise models and accuracy metrics.

Every algorithm in the package consumes an :class:`AnchorSet` and a
:class:`RangeVector` and produces a :class:`LocalizationResult`. Scenarios
bundle both together with the ground truth used to score the estimate.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from rangeloc.errors import DimensionMismatch, LengthMismatch, NonPositiveRange, ValidationError

logger = logging.getLogger(__name__)

MAX_NOISE_REDRAWS = 100
EIG_RATIO_CAP = 1e16


def _frozen(array: Any, dtype: type = float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ── Anchors and ranges ────────────────────────────────────────────────


@dataclass(frozen=True)
class AnchorSet:
    """Known sensor positions, one anchor per row (m × n)."""

    positions: np.ndarray

    def __post_init__(self) -> None:
        positions = _frozen(self.positions)
        if positions.ndim != 2:
            raise DimensionMismatch(f"anchor positions must be a matrix, got ndim={positions.ndim}")
        if positions.shape[0] < 1:
            raise DimensionMismatch("at least one anchor is required")
        if positions.shape[1] < 2:
            raise DimensionMismatch(f"ambient dimension must be >= 2, got {positions.shape[1]}")
        if not np.all(np.isfinite(positions)):
            raise ValidationError("anchor positions must be finite")
        object.__setattr__(self, "positions", positions)

    @property
    def m(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n(self) -> int:
        return int(self.positions.shape[1])

    def as_complex(self) -> np.ndarray:
        """Planar anchors packed as a_i = a_i1 + j·a_i2."""
        if self.n != 2:
            raise DimensionMismatch(f"complex packing needs n = 2, got n = {self.n}")
        return self.positions[:, 0] + 1j * self.positions[:, 1]

    def subset(self, indices: Sequence[int]) -> AnchorSet:
        return AnchorSet(self.positions[list(indices)])


@dataclass(frozen=True)
class RangeVector:
    """Strictly positive range measurements, one per anchor."""

    r: np.ndarray

    def __post_init__(self) -> None:
        r = _frozen(self.r).reshape(-1)
        if r.size == 0:
            raise LengthMismatch("range vector is empty")
        if not np.all(np.isfinite(r)):
            raise ValidationError("ranges must be finite")
        if np.any(r <= 0):
            raise NonPositiveRange(f"ranges must be > 0, got min {r.min():.3g}")
        object.__setattr__(self, "r", r)

    def __len__(self) -> int:
        return int(self.r.size)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r)

    def subset(self, indices: Sequence[int]) -> RangeVector:
        return RangeVector(self.r[list(indices)])


def check_compatible(anchors: AnchorSet, ranges: RangeVector) -> None:
    if len(ranges) != anchors.m:
        raise DimensionMismatch(f"{anchors.m} anchors but {len(ranges)} ranges")


# ── Noise models ──────────────────────────────────────────────────────


class _Noise(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GaussianNoise(_Noise):
    kind: Literal["gaussian"] = "gaussian"
    sigma: float = Field(ge=0)

    @property
    def label(self) -> str:
        return f"gaussian sigma={self.sigma:g}"

    @property
    def level(self) -> float:
        return self.sigma


class LaplacianNoise(_Noise):
    """Laplacian noise parameterized by its standard deviation (scale σ/√2)."""

    kind: Literal["laplacian"] = "laplacian"
    sigma: float = Field(gt=0)

    @property
    def label(self) -> str:
        return f"laplacian sigma={self.sigma:g}"

    @property
    def level(self) -> float:
        return self.sigma

    @property
    def scale(self) -> float:
        return self.sigma / math.sqrt(2.0)


class SelectiveGaussianNoise(_Noise):
    """Gaussian noise on every range plus a half-normal outlier on one of them."""

    kind: Literal["selective"] = "selective"
    sigma_base: float = Field(gt=0)
    sigma_outlier: float = Field(gt=0)

    @property
    def label(self) -> str:
        return f"selective sigma_base={self.sigma_base:g} sigma_outlier={self.sigma_outlier:g}"

    @property
    def level(self) -> float:
        return self.sigma_outlier


NoiseModel = Annotated[
    GaussianNoise | LaplacianNoise | SelectiveGaussianNoise,
    Field(discriminator="kind"),
]


def _draw(noise: GaussianNoise | LaplacianNoise | SelectiveGaussianNoise, size: int,
          rng: np.random.Generator) -> np.ndarray:
    if isinstance(noise, GaussianNoise):
        if noise.sigma == 0:
            return np.zeros(size)
        return rng.normal(0.0, noise.sigma, size)
    if isinstance(noise, LaplacianNoise):
        return rng.laplace(0.0, noise.scale, size)
    return rng.normal(0.0, noise.sigma_base, size)


def apply_noise(
    true_ranges: RangeVector,
    noise: GaussianNoise | LaplacianNoise | SelectiveGaussianNoise,
    rng: np.random.Generator,
) -> RangeVector:
    """Corrupt exact ranges according to ``noise``.

    A noise term that would make its range non-positive is redrawn, at most
    ``MAX_NOISE_REDRAWS`` times per term.

    Raises:
        NonPositiveRange: a term could not be redrawn into a positive range.
    """
    r = true_ranges.r
    terms = _draw(noise, r.size, rng)
    if isinstance(noise, SelectiveGaussianNoise):
        outlier = int(rng.integers(r.size))
        terms[outlier] += abs(rng.normal(0.0, noise.sigma_outlier))

    bad = r + terms <= 0
    attempts = 0
    while bad.any():
        if attempts == MAX_NOISE_REDRAWS:
            raise NonPositiveRange(
                f"{int(bad.sum())} range(s) still non-positive after {attempts} redraws"
            )
        logger.debug("Redrawing %d non-positive noise term(s)", int(bad.sum()))
        terms[bad] = _draw(noise, int(bad.sum()), rng)
        attempts += 1
        bad = r + terms <= 0
    return RangeVector(r + terms)


# ── Scenarios ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Scenario:
    """One localization instance with its ground truth."""

    anchors: AnchorSet
    source: np.ndarray
    true_ranges: RangeVector
    measured_ranges: RangeVector
    noise: GaussianNoise | LaplacianNoise | SelectiveGaussianNoise
    seed: int
    run_index: int = 0

    def __post_init__(self) -> None:
        source = _frozen(self.source).reshape(-1)
        if source.size != self.anchors.n:
            raise DimensionMismatch(
                f"source has {source.size} coordinates, anchors {self.anchors.n}"
            )
        check_compatible(self.anchors, self.true_ranges)
        check_compatible(self.anchors, self.measured_ranges)
        object.__setattr__(self, "source", source)

    def to_dict(self) -> dict[str, Any]:
        return {
            "anchors": {
                "positions": self.anchors.positions.tolist(),
                "m": self.anchors.m,
                "n": self.anchors.n,
            },
            "source": self.source.tolist(),
            "true_ranges": {"r": self.true_ranges.r.tolist()},
            "measured_ranges": {"r": self.measured_ranges.r.tolist()},
            "noise": self.noise.model_dump(),
            "seed": self.seed,
            "run_index": self.run_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        from pydantic import TypeAdapter

        noise = TypeAdapter(NoiseModel).validate_python(data["noise"])
        return cls(
            anchors=AnchorSet(np.asarray(data["anchors"]["positions"], dtype=float)),
            source=np.asarray(data["source"], dtype=float),
            true_ranges=RangeVector(np.asarray(data["true_ranges"]["r"], dtype=float)),
            measured_ranges=RangeVector(np.asarray(data["measured_ranges"]["r"], dtype=float)),
            noise=noise,
            seed=int(data["seed"]),
            run_index=int(data.get("run_index", 0)),
        )


def scenario_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent stream for one Monte Carlo run, derived from (seed, run_index)."""
    if seed < 0 or run_index < 0:
        raise ValidationError("seed and run_index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, run_index]))


def generate_scenario(
    m: int,
    n: int,
    box_half_width: float,
    noise: GaussianNoise | LaplacianNoise | SelectiveGaussianNoise,
    seed: int,
    run_index: int = 0,
) -> Scenario:
    """Draw anchors and source uniformly in the box and measure noisy ranges.

    Args:
        m: Number of anchors.
        n: Ambient dimension (2 or 3).
        box_half_width: Coordinates are uniform on [-box_half_width, box_half_width].
        noise: Range noise model.
        seed: Experiment seed.
        run_index: Monte Carlo run; each run gets its own stream.

    Returns:
        Scenario with exact and measured ranges.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if n not in (2, 3):
        raise DimensionMismatch(f"n must be 2 or 3, got {n}")
    if box_half_width <= 0:
        raise ValidationError("box_half_width must be > 0")

    rng = scenario_rng(seed, run_index)
    positions = rng.uniform(-box_half_width, box_half_width, size=(m, n))
    source = rng.uniform(-box_half_width, box_half_width, size=n)
    true_ranges = RangeVector(np.linalg.norm(positions - source, axis=1))
    measured = apply_noise(true_ranges, noise, rng)
    return Scenario(
        anchors=AnchorSet(positions),
        source=source,
        true_ranges=true_ranges,
        measured_ranges=measured,
        noise=noise,
        seed=seed,
        run_index=run_index,
    )


# ── Geometry helpers ──────────────────────────────────────────────────


def centroid(points: np.ndarray) -> np.ndarray:
    """Column means of a k × n point matrix."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 1:
        raise LengthMismatch("centroid of an empty point set")
    return points.mean(axis=0)


def weighted_centroid(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """x = Σ y_i/λ_i / Σ 1/λ_i, the minimizer of Σ ‖x − y_i‖²/λ_i."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    inv = 1.0 / np.asarray(weights, dtype=float)
    if inv.size != points.shape[0]:
        raise LengthMismatch(f"{points.shape[0]} points but {inv.size} weights")
    return inv @ points / inv.sum()


def project_to_spheres(
    anchors: AnchorSet, ranges: RangeVector, directions: np.ndarray
) -> np.ndarray:
    """Y = A + R·U: points on each measurement sphere along the rows of U."""
    directions = np.asarray(directions, dtype=float)
    if directions.shape != anchors.positions.shape:
        raise DimensionMismatch(
            f"directions {directions.shape} do not match anchors {anchors.positions.shape}"
        )
    return anchors.positions + ranges.r[:, None] * directions


def ml_cost(
    x: np.ndarray, anchors: AnchorSet, ranges: RangeVector, p: int = 1, q: int = 2
) -> float:
    """Σ |‖x − a_i‖^p − r_i^p|^q.

    (p, q) = (1, 2) is the Gaussian likelihood cost, (1, 1) the Laplacian
    one and (2, 2) the squared-range least-squares cost.
    """
    d = np.linalg.norm(anchors.positions - np.asarray(x, dtype=float), axis=1)
    return float(np.sum(np.abs(d**p - ranges.r**p) ** q))


def residuals(x: np.ndarray, anchors: AnchorSet, ranges: RangeVector) -> np.ndarray:
    """K_i = |‖x − a_i‖ − r_i|."""
    d = np.linalg.norm(anchors.positions - np.asarray(x, dtype=float), axis=1)
    return np.abs(d - ranges.r)


def refine_position(
    x0: np.ndarray,
    anchors: AnchorSet,
    ranges: RangeVector,
    loss: Literal["gaussian", "laplacian"] = "gaussian",
    max_nfev: int = 50,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Polish an estimate by a local trust-region search on the range residuals.

    The Gaussian cost Σ(‖x − a_i‖ − r_i)²/λ_i (λ_i = 1 without ``weights``)
    is minimized directly, the Laplacian cost Σ|‖x − a_i‖ − r_i| through a
    soft-ℓ1 loss scaled to the starting residuals. The polished point is
    returned only when it lowers that cost; otherwise ``x0`` comes back
    unchanged.
    """
    x0 = np.asarray(x0, dtype=float)
    A, r = anchors.positions, ranges.r
    scale = np.ones(anchors.m) if weights is None else 1.0 / np.sqrt(np.asarray(weights))

    def fun(x: np.ndarray) -> np.ndarray:
        return scale * (np.linalg.norm(x - A, axis=1) - r)

    def jac(x: np.ndarray) -> np.ndarray:
        d = x - A
        norms = np.linalg.norm(d, axis=1)
        return scale[:, None] * d / np.where(norms > 1e-12, norms, 1.0)[:, None]

    def cost(x: np.ndarray) -> float:
        f = fun(x)
        return float(f @ f) if loss == "gaussian" else float(np.sum(np.abs(f)))

    if loss == "gaussian":
        kind, f_scale = "linear", 1.0
    else:
        kind = "soft_l1"
        f_scale = 1e-3 * max(float(np.median(np.abs(fun(x0)))), 1e-9)
    sol = optimize.least_squares(
        fun, x0, jac=jac, method="trf", loss=kind, f_scale=f_scale,
        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev,
    )
    before, after = cost(x0), cost(sol.x)
    if not np.all(np.isfinite(sol.x)) or after >= before:
        return x0
    logger.debug("Refined estimate by %.3e (%s cost %.6g -> %.6g)",
                 float(np.linalg.norm(sol.x - x0)), loss, before, after)
    return sol.x


# ── Metrics ───────────────────────────────────────────────────────────


def rmse(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """sqrt((1/M) Σ ‖x_i − x̂_i‖²) over M paired runs."""
    if len(estimates) != len(truths):
        raise LengthMismatch(f"{len(estimates)} estimates but {len(truths)} truths")
    if len(estimates) == 0:
        raise LengthMismatch("rmse of zero runs")
    errors = np.asarray(estimates, dtype=float) - np.asarray(truths, dtype=float)
    return float(np.sqrt(np.mean(np.sum(errors**2, axis=-1))))


# ── Results ───────────────────────────────────────────────────────────


class SolverStatus(str, Enum):
    OPTIMAL = "Optimal"
    INACCURATE = "Inaccurate"
    FAILED = "Failed"

    def __str__(self) -> str:
        return self.value


def worst_status(*statuses: SolverStatus) -> SolverStatus:
    order = [SolverStatus.OPTIMAL, SolverStatus.INACCURATE, SolverStatus.FAILED]
    return max(statuses, key=order.index)


@dataclass(frozen=True)
class LocalizationResult:
    """Estimated source position plus relaxation diagnostics."""

    position: np.ndarray
    relaxation_matrix: np.ndarray
    eig_ratio: float
    objective: float
    solver_status: SolverStatus
    iterations: int = 1
    algorithm: str = ""
    converged: bool = True
    solve_time: float = 0.0
    cost_history: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _frozen(self.position).reshape(-1))
        object.__setattr__(self, "relaxation_matrix", _frozen(self.relaxation_matrix, complex)
                           if np.iscomplexobj(self.relaxation_matrix)
                           else _frozen(self.relaxation_matrix))
        if not self.eig_ratio >= 1.0:
            raise ValidationError(f"eig_ratio must be >= 1, got {self.eig_ratio}")
        if self.solver_status != SolverStatus.FAILED and not np.all(np.isfinite(self.position)):
            raise ValidationError("position must be finite unless the solve failed")

    @property
    def tight(self) -> bool:
        return self.solver_status != SolverStatus.FAILED and self.eig_ratio >= 1e2

    def is_tight(self, threshold: float = 1e2) -> bool:
        return self.solver_status != SolverStatus.FAILED and self.eig_ratio >= threshold

    @classmethod
    def failed(cls, algorithm: str, n: int) -> LocalizationResult:
        return cls(
            position=np.full(n, np.nan),
            relaxation_matrix=np.zeros((0, 0)),
            eig_ratio=1.0,
            objective=float("nan"),
            solver_status=SolverStatus.FAILED,
            iterations=0,
            algorithm=algorithm,
            converged=False,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "position": self.position.tolist(),
            "eig_ratio": self.eig_ratio,
            "objective": self.objective,
            "status": str(self.solver_status),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def eig_ratio(eigenvalues: np.ndarray, k: int) -> float:
    """λ_k / λ_{k+1} of a descending spectrum, capped at ``EIG_RATIO_CAP``.

    A spectrum that is rank k up to round-off (λ_{k+1} ≤ 100·size·ε·λ_k) gets
    the cap.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if k >= lam.size:
        return EIG_RATIO_CAP
    top, nxt = lam[k - 1], max(lam[k], 0.0)
    if top <= 0:
        return 1.0
    if nxt <= 100.0 * lam.size * np.finfo(float).eps * top:
        return EIG_RATIO_CAP
    return float(max(1.0, top / nxt))
