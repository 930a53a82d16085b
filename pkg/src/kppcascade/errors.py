"""Shared exception types.

The CLI maps these to exit codes: invalid input or configuration -> 2,
numerical failure -> 3, I/O trouble -> 4 (plain OSError).
"""

from __future__ import annotations


class KppError(Exception):
    """Base class for everything raised deliberately by this package."""


class InvalidInputError(KppError, ValueError):
    """Arguments or configuration outside an operation's domain."""


class SubcriticalSpeedError(InvalidInputError):
    """Requested wave speed is below the minimal front speed 2*sqrt(f'(0))."""


class NumericalError(KppError, RuntimeError):
    """A computation ran but could not produce a usable result."""


class NoFrontError(NumericalError):
    """The field never crosses the requested level, so there is no front."""


class NotConvergedError(NumericalError):
    """An estimate did not reach its convergence target."""


class NoDataError(NumericalError):
    """An estimator was handed an empty (or fully discarded) sample."""
