"""Settings models for solvers, algorithms and experiments.

Everything tunable lives here as a frozen pydantic model so that one JSON
document can configure a whole experiment and every default is visible in
one place.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from rangeloc.core import NoiseModel
from rangeloc.errors import ConfigError

logger = logging.getLogger(__name__)

Algorithm = Literal["slcp", "slnn", "sll1-ad", "sll1-md", "sll1-sd", "srls"]
ALGORITHMS: tuple[str, ...] = ("slcp", "slnn", "sll1-ad", "sll1-md", "sll1-sd", "srls")


class _Settings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SolverSettings(_Settings):
    """Conic backend settings shared by every relaxation."""

    solver: Literal["CLARABEL", "SCS"] = "CLARABEL"
    tolerance: float = Field(default=1e-8, gt=0)
    inaccurate_tolerance: float = Field(default=1e-5, gt=0)
    max_iters: int = Field(default=500, ge=1)
    verbose: bool = False

    @model_validator(mode="after")
    def _ordered(self) -> SolverSettings:
        if self.inaccurate_tolerance < self.tolerance:
            raise ValueError("inaccurate_tolerance must be >= tolerance")
        return self


class SlcpSettings(_Settings):
    factorization: Literal["eigen", "grid"] = "eigen"
    grid_points: int = Field(default=200_000, ge=8)
    tightness_threshold: float = Field(default=1e2, ge=1)


class SlnnSettings(_Settings):
    tightness_threshold: float = Field(default=1e2, ge=1)


class Sll1Settings(_Settings):
    """SL-ℓ1 knobs.

    ``sigma_big`` is the large constant replacing the limit in the Ξ inverse;
    when unset it is derived as ``1e3 * box_half_width**2``.
    """

    epsilon: float = Field(default=1e-2, gt=0)
    max_iters: int = Field(default=20, ge=1)
    sigma_big: float | None = Field(default=None, gt=0)
    box_half_width: float = Field(default=10.0, gt=0)
    mu: float = Field(default=1e-2, gt=0)
    beta_floor: float = Field(default=1e-9, gt=0)
    residual_floor: float = Field(default=1e-8, gt=0)

    @property
    def effective_sigma(self) -> float:
        if self.sigma_big is not None:
            return self.sigma_big
        return 1e3 * self.box_half_width**2


class AnalysisSettings(_Settings):
    n_betas: int = Field(default=200, ge=2)
    gap_threshold: float = Field(default=0.02, gt=0)
    full_hull: bool = False


class BaselineSettings(_Settings):
    tolerance: float = Field(default=1e-10, gt=0)
    max_iters: int = Field(default=200, ge=1)
    margin: float = Field(default=1e-9, gt=0)


class RefineSettings(_Settings):
    """Local ML polish applied to every relaxed estimate."""

    enabled: bool = True
    max_nfev: int = Field(default=50, ge=1)


class AlgorithmSettings(_Settings):
    solver: SolverSettings = Field(default_factory=SolverSettings)
    refine: RefineSettings = Field(default_factory=RefineSettings)
    slcp: SlcpSettings = Field(default_factory=SlcpSettings)
    slnn: SlnnSettings = Field(default_factory=SlnnSettings)
    sll1: Sll1Settings = Field(default_factory=Sll1Settings)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)
    baseline: BaselineSettings = Field(default_factory=BaselineSettings)


class ExperimentConfig(_Settings):
    """One Monte Carlo experiment: a scenario family, a noise grid, algorithms.

    Every noise point gets ``runs`` scenarios; each scenario is shared by all
    selected algorithms.
    """

    name: str = "experiment"
    m: int = Field(default=5, ge=1)
    n: Literal[2, 3] = 2
    box_half_width: float = Field(default=10.0, gt=0)
    noise_grid: list[NoiseModel] = Field(min_length=1)
    algorithms: list[Algorithm] = Field(min_length=1)
    runs: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    settings: AlgorithmSettings = Field(default_factory=AlgorithmSettings)
    output: Path | None = None

    @field_validator("algorithms")
    @classmethod
    def _unique(cls, value: list[str]) -> list[str]:
        if len(set(value)) != len(value):
            raise ValueError("algorithms must not repeat")
        return value

    @field_validator("noise_grid")
    @classmethod
    def _distinct_noise(cls, value: list[NoiseModel]) -> list[NoiseModel]:
        labels = [noise.label for noise in value]
        if len(set(labels)) != len(labels):
            raise ValueError("noise points must not repeat")
        return value

    @model_validator(mode="after")
    def _slcp_is_planar(self) -> ExperimentConfig:
        if "slcp" in self.algorithms and self.n != 2:
            raise ValueError("slcp requires n = 2")
        return self

    def sll1_settings(self) -> Sll1Settings:
        """SL-ℓ1 settings with the box size of this experiment."""
        return self.settings.sll1.model_copy(update={"box_half_width": self.box_half_width})


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment configuration file."""
    try:
        config = ExperimentConfig.model_validate_json(Path(path).read_text())
    except PydanticValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    logger.info("Loaded experiment config '%s' from %s", config.name, path)
    return config


def load_settings(path: Path) -> AlgorithmSettings:
    """Read and validate an algorithm settings file for a single solve."""
    try:
        settings = AlgorithmSettings.model_validate_json(Path(path).read_text())
    except PydanticValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    logger.info("Loaded algorithm settings from %s", path)
    return settings
