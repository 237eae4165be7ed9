"""Experiment specs and the sweep runner (one row per axis point and seed)."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..config import RunConfig, load_yaml
from ..errors import ConfigurationError, RunawayRunError, SafetyViolation

log = logging.getLogger(__name__)

SWEEPABLE = ("n", "kappa", "delta", "alpha", "p", "b", "epsilon", "spectre_rate", "max_time", "np")
WORKERS_ENV = "TOBENCH_WORKERS"


@dataclass
class ExperimentSpec:
    name: str
    protocol: str
    axes: list[tuple[str, list[Any]]]
    seeds: int = 20
    master_seed: int = 0
    base: dict[str, Any] = field(default_factory=dict)
    tolerance: float | None = None

    def __post_init__(self):
        self.axes = [(str(a), list(v)) for a, v in self.axes]
        if not 1 <= len(self.axes) <= 2:
            raise ConfigurationError("an experiment sweeps one or two axes")
        for name, values in self.axes:
            if name not in SWEEPABLE:
                raise ConfigurationError(f"cannot sweep {name!r}; sweepable: {SWEEPABLE}")
            if not values:
                raise ConfigurationError(f"axis {name!r} has no values")
        if self.seeds < 1:
            raise ConfigurationError("seeds must be >= 1")
        bad = {"protocol", "seed"} & set(self.base)
        if bad:
            raise ConfigurationError(f"base config must not set {sorted(bad)}")
        RunConfig.from_dict({**self.base, "protocol": self.protocol})  # validates keys

    @property
    def axis_label(self) -> str:
        return ",".join(a for a, _ in self.axes)

    def points(self) -> list[dict[str, Any]]:
        names = [a for a, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]

    def seed_of(self, index: int) -> int:
        # common seeds across axis points keep slope estimates low-variance
        return self.master_seed * 100_003 + index

    def config(self, point: dict[str, Any], index: int) -> RunConfig:
        return RunConfig.from_dict({**self.base, **point, "protocol": self.protocol, "seed": self.seed_of(index)})

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentSpec":
        data = dict(data)
        axes = data.pop("axes", None)
        if isinstance(axes, dict):
            axes = list(axes.items())
        if not axes:
            raise ConfigurationError("experiment needs 'axes'")
        known = {"name", "protocol", "seeds", "master_seed", "base", "tolerance"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {', '.join(unknown)}")
        if "protocol" not in data:
            raise ConfigurationError("experiment needs 'protocol'")
        return cls(name=data.get("name", data["protocol"]), protocol=data["protocol"], axes=axes,
                   seeds=int(data.get("seeds", 20)), master_seed=int(data.get("master_seed", 0)),
                   base=dict(data.get("base") or {}), tolerance=data.get("tolerance"))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        return cls.from_dict(load_yaml(path))


def claim_params(cfg: RunConfig) -> dict[str, float]:
    """Model parameters a complexity claim is evaluated at."""
    rate = cfg.spectre_rate if cfg.protocol == "spectre" and cfg.spectre_rate is not None else cfg.p
    return dict(n=cfg.n, kappa=cfg.kappa, b=cfg.b, delta=cfg.delta, p=float(rate) if rate else 1.0)


def _value_label(point: dict[str, Any]) -> Any:
    vals = list(point.values())
    return vals[0] if len(vals) == 1 else ",".join(str(v) for v in vals)


def run_point(spec: ExperimentSpec, point: dict[str, Any], index: int) -> dict[str, Any]:
    """Run one (axis point, seed) job and return its result row."""
    from ..protocols import run_protocol

    row: dict[str, Any] = dict(experiment=spec.name, protocol=spec.protocol, axis=spec.axis_label,
                               value=_value_label(point), seed=spec.seed_of(index), point=dict(point),
                               status="ok", reason="")
    try:
        cfg = spec.config(point, index)
        result = run_protocol(cfg)
    except ConfigurationError as exc:
        row.update(status="skipped", reason=str(exc))
        return row
    except (RunawayRunError, SafetyViolation) as exc:
        row.update(status="failed", reason=f"{type(exc).__name__}: {exc}")
        return row
    m = result.metrics
    row.update(latency=m["latency_mean"], comm=m["comm_amortized"], **{k: m[k] for k in m})
    row["params"] = claim_params(cfg)
    return row


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


def run_sweep(spec: ExperimentSpec, workers: int | None = None) -> list[dict[str, Any]]:
    """All rows of an experiment, ordered by (axis point, seed) regardless of worker count."""
    jobs = [(p, i) for p in spec.points() for i in range(spec.seeds)]
    nw = _worker_count(workers)
    log.info("sweep %s: %d jobs on %d worker(s)", spec.name, len(jobs), nw)
    if nw == 1:
        return [run_point(spec, p, i) for p, i in jobs]
    with ProcessPoolExecutor(max_workers=nw) as pool:
        futures = [pool.submit(run_point, spec, p, i) for p, i in jobs]
        return [f.result() for f in futures]
