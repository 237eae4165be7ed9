"""Exception types shared across the simulator."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Invalid or inadmissible configuration; the run never starts (or aborts)."""


class RunawayRunError(RuntimeError):
    """The event cap was hit. The partial trace is attached for inspection."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class SafetyViolation(RuntimeError):
    """Raised by strict-mode checks when honest nodes commit conflicting values."""
