# src/utils/exceptions.py
"""
Error hierarchy shared by every stage. Each class carries the exit code the
CLI reports when the error escapes a subcommand.
"""


class DtrError(Exception):
    exit_code = 1


class ConfigError(DtrError):
    exit_code = 2


class MissingArtifactError(DtrError):
    exit_code = 3


class DataValidationError(DtrError):
    exit_code = 4


class GapError(DataValidationError):
    """Samples missing inside the off-peak or peak window of a day."""


class InsufficientHistoryError(DataValidationError):
    pass


class ParameterError(DtrError, ValueError):
    exit_code = 4


class AlreadyTrippingError(DtrError):
    """The preload alone exceeds the relay thermal boundary at the requested time."""
    exit_code = 4


class InvariantViolation(DtrError):
    exit_code = 1
