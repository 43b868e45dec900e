"""Exception hierarchy shared across the package."""


class LogTraceError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LogTraceError, ValueError):
    """Arguments violate an operation's preconditions."""


class InvalidSpecError(InvalidInputError):
    """A LogSpec or AcquisitionSpec violates its invariants."""


class SegmentationFailedError(LogTraceError):
    """A binary mask has no foreground, so no patch can be cut."""


class IncomparableError(LogTraceError):
    """Two templates share no mutually valid cells or bits."""


class UndefinedEERError(LogTraceError, ValueError):
    """EER requested with an empty genuine or impostor score list."""


class ProtocolError(LogTraceError):
    """An evaluation fold cannot produce a valid EER."""

    def __init__(self, message, fold=None):
        super().__init__(message)
        self.fold = fold


class NotFittedError(LogTraceError, AttributeError):
    """Estimator used before ``fit``."""


class ConfigError(LogTraceError):
    """An experiment configuration is malformed or references missing data."""
