"""Exception types shared across the package."""


class CvStabError(Exception):
    """Base class for every error raised on purpose by cvstab."""


class DataError(CvStabError, ValueError):
    """Malformed input data or a violated precondition on the data."""


class FitError(CvStabError, ArithmeticError):
    """A learner could not produce a finite fit."""
