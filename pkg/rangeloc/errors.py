"""Exception hierarchy and warning categories for rangeloc.

Library code raises these; the Monte Carlo harness and the CLI decide
whether a failure is fatal.
"""

from __future__ import annotations

import logging
import warnings

logger = logging.getLogger(__name__)


class RangelocError(Exception):
    """Base class for every error raised by rangeloc."""


# ── Validation ────────────────────────────────────────────────────────


class ValidationError(RangelocError, ValueError):
    """Input violates a type invariant or an operation precondition."""


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NonPositiveRange(ValidationError):
    """A measured range stayed ≤ 0 after the bounded number of redraws."""


class NotHermitian(ValidationError):
    pass


class NotPsd(ValidationError):
    pass


class DegenerateRow(ValidationError):
    pass


class NotUnitDiagonal(ValidationError):
    pass


class NotBoundary(ValidationError):
    """Matrix lies strictly inside the PSD set (det > 0)."""


class RankDeficient(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# ── Solver ────────────────────────────────────────────────────────────


class SdpError(RangelocError):
    """Conic backend did not return a usable point."""

    def __init__(self, message: str, status: str | None = None) -> None:
        super().__init__(message)
        self.status = status


class Infeasible(SdpError):
    pass


class Unbounded(SdpError):
    pass


class NumericalFailure(SdpError):
    pass


class BisectionFailure(RangelocError):
    pass


class NonConvergence(RangelocError):
    pass


# ── Warnings ──────────────────────────────────────────────────────────


class RangelocWarning(UserWarning):
    pass


class TightnessWarning(RangelocWarning):
    """Relaxed solution is not close to the required rank."""


class FallbackWarning(RangelocWarning):
    """An algorithm returned a fallback estimate."""


class ConvergenceWarning(RangelocWarning):
    """An iterative method stopped at its iteration cap."""


def warn(message: str, category: type[RangelocWarning], source: logging.Logger) -> None:
    """Log a warning on ``source`` and raise it through :mod:`warnings`."""
    source.warning(message)
    warnings.warn(message, category, stacklevel=3)
