"""
SABR Series Lab - Errors
Exception hierarchy shared by the numerical services.
"""
from typing import Optional


class SabrLabError(Exception):
    """Base class for every failure raised by the lab."""


class DomainError(SabrLabError, ValueError):
    """An operation was called outside its domain of definition."""


class ConvergenceError(SabrLabError):
    """Quadrature or root finding did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: Optional[float] = None, abs_err: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.abs_err = abs_err


class BranchCutError(SabrLabError, AssertionError):
    """The (sqrt z)_+ argument landed on the positive real axis inside the half-strip."""
