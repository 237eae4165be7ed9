"""Shared plumbing for protocol runs: results, TO-delivery bookkeeping, trace metadata."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..config import RunConfig
from ..net import BitLedger, CorruptionMap
from ..sim import RECORD_ALL, DEFAULT_RECORD, Engine, EventKind, Trace, config_digest


@dataclass
class RunResult:
    protocol: str
    config: RunConfig
    trace: Trace
    ledger: BitLedger
    corruption: CorruptionMap
    extras: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)


def make_engine(cfg: RunConfig) -> Engine:
    record = RECORD_ALL if cfg.record_network else DEFAULT_RECORD
    return Engine(record=record, config_digest=config_digest(cfg.to_dict()))


class DeliveryBook:
    """Emits Broadcast/Delivery records; at most one Delivery per (message, honest node)."""

    def __init__(self, engine: Engine, corruption: CorruptionMap):
        self.engine = engine
        self.honest = corruption.honest_mask
        self.n_honest = int(self.honest.sum())
        self.sent: dict[str, tuple[int, int]] = {}
        self.delivered: dict[str, set[int]] = {}
        self.order: dict[int, list[str]] = {}

    def broadcast(self, node: int, msg_id: str, bits: int) -> None:
        if msg_id in self.sent:
            return
        self.sent[msg_id] = (self.engine.now, bits)
        self.delivered.setdefault(msg_id, set())
        self.engine.emit(EventKind.BROADCAST, node, bits, msg_id)

    def deliver(self, node: int, msg_id: str, bits: int) -> bool:
        if not self.honest[node]:
            return False
        got = self.delivered.setdefault(msg_id, set())
        if node in got:
            return False
        got.add(node)
        self.order.setdefault(node, []).append(msg_id)
        self.engine.emit(EventKind.DELIVERY, node, bits, msg_id)
        return True

    def deliver_many(self, nodes, msg_id: str, bits: int) -> None:
        for i in nodes:
            self.deliver(int(i), msg_id, bits)

    def complete(self, msg_id: str) -> bool:
        return len(self.delivered.get(msg_id, ())) >= self.n_honest

    def all_complete(self, msg_ids=None) -> bool:
        ids = self.sent if msg_ids is None else msg_ids
        return all(self.complete(m) for m in ids)


def finalize(engine: Engine, cfg: RunConfig, ledger: BitLedger, corruption: CorruptionMap,
             *, order: str = "total", **meta: Any) -> Trace:
    trace = engine.trace
    trace.meta.update(
        protocol=cfg.protocol,
        n=cfg.n,
        delta=cfg.delta,
        seed=cfg.seed,
        byzantine=sorted(corruption.byzantine),
        honest_bits=int(ledger.total),
        order=order,
        end_time=int(engine.now),
    )
    trace.meta.update(meta)
    return trace


def honest_indices(corruption: CorruptionMap) -> np.ndarray:
    return np.flatnonzero(corruption.honest_mask)
