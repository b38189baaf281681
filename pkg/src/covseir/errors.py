"""Exception types shared across the package.

Every contract violation raises a subclass of :class:`CovseirError` so callers
(and the CLI) can distinguish our failures from genuine bugs.
"""

from __future__ import annotations


class CovseirError(Exception):
    """Base class for all covseir errors."""


class DomainError(CovseirError):
    """Input outside the mathematical domain of an operation.

    Examples: non-finite compartment values, non-positive population,
    a zero denominator factor in the reproduction-number formula.
    """


class NumericalError(CovseirError):
    """A numerical operation failed (overflow, singular matrix, division by zero)."""


class TapeError(CovseirError):
    """Misuse of the autodiff tape (mixed tapes, repeated backward, non-scalar root)."""


class DataError(CovseirError):
    """Malformed input data: missing columns, unknown locations, bad schema."""


class ConfigError(CovseirError):
    """Invalid run configuration."""


class TrainingDivergedError(CovseirError):
    """Training produced a non-finite loss or state.

    Carries the iteration index at which divergence was detected.
    """

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        detail = message or "training loss became non-finite"
        super().__init__(f"iteration {iteration}: {detail}")


class EmptyMetricError(CovseirError):
    """A metric had no scoreable (observed, valid) points."""
