"""
errors.py — exception hierarchy for the ladder control toolkit
"""
from __future__ import annotations


class LadderControlError(Exception):
    """Base class for every error raised on purpose by this package."""


class NonDegeneracyError(LadderControlError, ValueError):
    """Two energies of H0 coincide."""


class InvalidLevelError(LadderControlError, IndexError):
    """A level index falls outside [1, n]."""


class SingularStateError(LadderControlError, ValueError):
    """Polar dynamics requested where some amplitude is (numerically) zero."""


class IntegrationError(LadderControlError, RuntimeError):
    """A single integration step lost too much norm."""

    def __init__(self, message: str, t: float | None = None, drift: float | None = None):
        super().__init__(message)
        self.t = t
        self.drift = drift


class ConfigError(LadderControlError, ValueError):
    """An experiment file could not be turned into a valid config."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message
