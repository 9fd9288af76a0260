"""Exception hierarchy for concordia."""

from __future__ import annotations


class ConcordiaError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ConcordiaError, ValueError):
    """Invalid input data: malformed files, inconsistent tables, bad shapes."""


class TableTooLargeError(DataError):
    """An operation would enumerate more dense cells than the configured budget."""


class ShapeError(DataError):
    """The requested operation does not apply to tables of this shape."""


class SolverError(ConcordiaError, RuntimeError):
    """The likelihood solver found no admissible solution."""

    def __init__(self, message: str, diagnostics: object | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics


class SingularVarianceError(ConcordiaError, RuntimeError):
    """A variance expression has a vanishing denominator at this fit."""


class UnreliableResamplingError(ConcordiaError, RuntimeError):
    """Too many resampling replicates degenerated to trust the result."""


class SaturatedModelError(ConcordiaError, ValueError):
    """Goodness of fit is undefined: the model has no residual degrees of freedom."""
