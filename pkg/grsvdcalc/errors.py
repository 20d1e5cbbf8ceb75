"""Exception hierarchy shared by every grsvdcalc module."""

from __future__ import annotations


class GrsvdError(Exception):
    """Base class for all errors raised by grsvdcalc."""


class ParameterError(GrsvdError, ValueError):
    """An argument is out of range or has the wrong shape."""


class NotPSDError(ParameterError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class ConfigError(GrsvdError):
    """The experiment configuration is missing, unreadable or invalid."""


class DegeneracyError(GrsvdError):
    """A matrix that must have full rank is numerically rank deficient."""

    def __init__(self, message: str, rank: int | None = None):
        super().__init__(message)
        self.rank = rank


class HypothesisError(GrsvdError):
    """A hypothesis required by a bound does not hold for this instance."""


class InfeasibleError(GrsvdError):
    """No (u, t) pair on the search grid meets the failure budget."""
