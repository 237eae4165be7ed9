"""Run configuration loaded from YAML (or a plain mapping)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .net import DELAY_POLICIES, ModelParams, as_fraction

PROTOCOLS = ("nakamoto", "ouroboros", "snowwhite", "tendermint", "hbbft", "algorand", "spectre")


@dataclass
class RunConfig:
    protocol: str = "tendermint"
    n: int = 4
    delta: int = 1
    alpha: Fraction = Fraction(0)
    kappa: int = 64
    p: float | None = None
    b: int = 1024
    synchrony: str = "sync"
    gst: int = 0
    corruption: str = "uniform"
    delay_policy: str = "max"
    seed: int = 0
    strategy: str = "silent"
    delta_b_slope: float = 0.0
    # workload
    heights: int = 1
    tx_count: int = 20
    tx_interval: int = 1
    max_time: int | None = None
    record_network: bool = False
    # chain protocols
    k: int | None = None
    asleep_fraction: float = 0.0
    np: float | None = None
    backbone: bool = False
    kg: int | None = None
    kq: int | None = None
    # tendermint / hbbft
    timeout_factor: int = 4
    batch_policy: str = "fixed"
    batch_multiplier: float = 1.0
    epochs: int = 1
    # algorand / spectre
    steps_R: int = 9
    committee_gap: Fraction = Fraction(1, 12)
    epsilon: float = 2.0**-20
    spectre_rate: float | None = None
    conflicts: int = 0

    def __post_init__(self):
        self.alpha = as_fraction(self.alpha)
        self.committee_gap = as_fraction(self.committee_gap)
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.synchrony not in ("sync", "partial", "async"):
            raise ConfigurationError(f"synchrony must be sync, partial or async, got {self.synchrony!r}")
        if self.corruption not in ("uniform", "worst"):
            raise ConfigurationError(f"corruption must be uniform or worst, got {self.corruption!r}")
        if self.delay_policy not in DELAY_POLICIES:
            raise ConfigurationError(f"delay_policy must be one of {DELAY_POLICIES}, got {self.delay_policy!r}")
        if self.batch_policy not in ("fixed", "hbbft"):
            raise ConfigurationError(f"batch_policy must be fixed or hbbft, got {self.batch_policy!r}")
        if self.k is not None and self.k < 0:
            raise ConfigurationError("k must be >= 0")
        if not (0 <= self.asleep_fraction < 1):
            raise ConfigurationError("asleep_fraction must lie in [0, 1)")
        if self.epsilon <= 0 or self.epsilon > 1:
            raise ConfigurationError("epsilon must lie in (0, 1]")

    @property
    def params(self) -> ModelParams:
        return ModelParams(n=self.n, delta=self.delta, alpha=self.alpha, kappa=self.kappa,
                           p=self.p, b=self.b, delta_b_slope=self.delta_b_slope)

    @property
    def confirmations(self) -> int:
        return self.kappa if self.k is None else self.k

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(v) if isinstance(v, Fraction) else v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)


def load_yaml(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.from_dict(load_yaml(path))
