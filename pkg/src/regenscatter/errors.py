"""Exception hierarchy shared by every module."""


class RegenScatterError(Exception):
    """Base class for library errors."""


class DomainError(RegenScatterError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(RegenScatterError, ValueError):
    """Configuration value violates an invariant."""


class LengthError(RegenScatterError, ValueError):
    """Signal or sequence too short, or lengths do not match."""


class OscillationError(RegenScatterError, ArithmeticError):
    """Loop gain at unity or losses fully cancelled: the circuit oscillates."""


class SyncError(RegenScatterError):
    """Timing synchronization could not lock onto the signal."""


class EvaluationError(RegenScatterError):
    """Objective function returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
