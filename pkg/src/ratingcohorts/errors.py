"""Exception hierarchy.

Everything raised on account of bad or insufficient input data derives from
:class:`RatingDataError`, which the command line maps to exit code 2.
"""


class RatingDataError(Exception):
    """Base class for problems with the input data."""


class MalformedRecordError(RatingDataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class UnknownBusinessError(RatingDataError):
    """A review points at a business_id missing from the business table."""


class DegeneratePopulationError(RatingDataError):
    """Too few entities, or zero spread, to compute moments / normalize."""


class InsufficientDataError(RatingDataError):
    pass


class SingularDesignError(RatingDataError):
    def __init__(self, column: str, message: str | None = None):
        super().__init__(message or f"design matrix is rank deficient at column {column!r}")
        self.column = column


class EmptyUniverseError(RatingDataError):
    pass


class ConfigError(ValueError):
    """Invalid configuration values (exit code 1 at the command line)."""
