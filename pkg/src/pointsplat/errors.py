"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError -> 2, DataError (and subclasses) -> 3,
DivergedError -> 4. InvalidParameterError signals a broken call contract
and is a ValueError so it also trips ordinary argument validation.
"""


class PointsplatError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PointsplatError, ValueError):
    """An argument violates the operation's contract (shape, range, finiteness)."""


class ConfigError(PointsplatError):
    """A configuration file or CLI flag combination is invalid."""


class DataError(PointsplatError):
    """Input data cannot be processed."""


class InsufficientDataError(DataError):
    """Too few valid samples to run an estimator."""


class EstimationFailedError(DataError):
    """An estimator ran but produced an unusable result (e.g. negative focal)."""


class InvalidGraphError(DataError):
    """Connectivity graph is disconnected, has self-edges, or references unknown views."""


class EmptyCloudError(DataError):
    """No Gaussian primitives survived initialization filters."""


class UndefinedLossError(DataError):
    """A loss has no valid support (e.g. every patch is constant)."""


class DivergedError(PointsplatError):
    """Optimization produced non-finite values and was aborted."""

    def __init__(self, message, partial_log=None):
        super().__init__(message)
        self.partial_log = partial_log
