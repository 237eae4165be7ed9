"""Discrete-event benchmark of total-order broadcast protocols: latency and bit complexity."""

from __future__ import annotations

from .config import PROTOCOLS, RunConfig, load_config
from .errors import ConfigurationError, RunawayRunError, SafetyViolation
from .protocols import RunResult, run_protocol

__version__ = "0.1.0"

__all__ = [
    "PROTOCOLS", "ConfigurationError", "RunConfig", "RunResult", "RunawayRunError", "SafetyViolation",
    "load_config", "run_protocol",
]
