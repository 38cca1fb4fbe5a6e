"""Exception hierarchy shared by every subpackage."""
from typing import Dict, Optional


class ArenaError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(ArenaError, ValueError):
    exit_code = 3


class SpawnError(ArenaError):
    """Rejection sampling ran out of attempts; the config is over-constrained."""

    exit_code = 4


class InvalidActionError(ArenaError, ValueError):
    exit_code = 4


class MissingTargetError(ArenaError, ValueError):
    exit_code = 4


class UnknownSkillError(ArenaError, ValueError):
    exit_code = 3


class TreeParseError(ArenaError, ValueError):
    exit_code = 3

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class PolicyShapeError(ArenaError, ValueError):
    exit_code = 5


class CorruptWeightsError(ArenaError):
    exit_code = 5


class SpecMismatchError(ArenaError):
    exit_code = 5


class NonFiniteLossError(ArenaError):
    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EmptyReportError(ArenaError, ValueError):
    exit_code = 3


class TraceVerificationError(ArenaError):
    exit_code = 6
