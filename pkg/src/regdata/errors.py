"""Exception types shared across the package.

Each error carries an ``exit_code`` so the command line runner can map a
failure onto its documented exit status without a lookup table.
"""


class RegDataError(Exception):
    exit_code = 1


class DimensionError(RegDataError, ValueError):
    pass


class NotSymmetricError(RegDataError, ValueError):
    pass


class RankDeficientError(RegDataError):
    """A regression or rank condition failed at the working tolerance."""

    def __init__(self, message, rank=None, required=None, blocks=None):
        super().__init__(message)
        self.rank = rank
        self.required = required
        self.blocks = blocks or {}


class SingularMatrixError(RegDataError):
    pass


class NotHurwitzError(RegDataError):
    pass


class ConvergenceError(RegDataError):
    exit_code = 4


class IterationCapError(ConvergenceError):
    exit_code = 4


class BlowUpError(RegDataError):
    exit_code = 3


class ConfigError(RegDataError, ValueError):
    exit_code = 2
