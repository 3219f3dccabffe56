"""Link-level simulator for a full-duplex mmWave backscatter tag built on
regenerative amplification."""

from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    LengthError,
    OscillationError,
    SyncError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "EvaluationError",
    "LengthError",
    "OscillationError",
    "SyncError",
]
