"""rangeloc: range-based source localization by semidefinite relaxation."""

__version__ = "0.1.0"

from rangeloc.baseline import solve_srls, srls  # noqa: F401
from rangeloc.config import AlgorithmSettings, ExperimentConfig, load_config  # noqa: F401
from rangeloc.core import (  # noqa: F401
    AnchorSet,
    GaussianNoise,
    LaplacianNoise,
    LocalizationResult,
    RangeVector,
    Scenario,
    SelectiveGaussianNoise,
    SolverStatus,
    generate_scenario,
)
from rangeloc.errors import RangelocError, RangelocWarning  # noqa: F401
from rangeloc.persistence import ReportStore  # noqa: F401
from rangeloc.simulator import ExperimentReport, localize, preset, run_experiment  # noqa: F401
from rangeloc.sll1 import sll1_ad, sll1_md, sll1_sd  # noqa: F401
from rangeloc.slcp import solve_slcp  # noqa: F401
from rangeloc.slnn import solve_slnn  # noqa: F401
