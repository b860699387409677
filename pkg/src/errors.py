"""
Exceptions raised by the PMU event classification system.
"""


class PmuEventsError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(PmuEventsError, ValueError):
    """An argument violates an operation's precondition."""


class DataFileError(PmuEventsError):
    """A dataset or model file cannot be read, written or parsed."""


class ConvergenceError(PmuEventsError):
    """Training stopped at its iteration limit without meeting its tolerance."""
