"""Protocol registry: ``run_protocol(cfg)`` dispatches on ``cfg.protocol``."""

from __future__ import annotations

from ..config import RunConfig
from .base import RunResult


def _runner(name: str):
    if name in ("nakamoto", "ouroboros", "snowwhite"):
        from .chain import run_chain
        return run_chain
    if name == "tendermint":
        from .tendermint import run_tendermint
        return run_tendermint
    if name == "hbbft":
        from .hbbft import run_hbbft
        return run_hbbft
    if name == "algorand":
        from .algorand import run_algorand
        return run_algorand
    if name == "spectre":
        from .spectre import run_spectre
        return run_spectre
    raise KeyError(name)


def run_protocol(cfg: RunConfig, *, with_metrics: bool = True) -> RunResult:
    result = _runner(cfg.protocol)(cfg)
    if with_metrics:
        from ..metrics import metrics_record
        result.metrics = metrics_record(result)
    return result


__all__ = ["RunResult", "run_protocol"]
