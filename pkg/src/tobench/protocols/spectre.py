"""Spectre: a block DAG where each block references every tip its miner knows.

A payload is accepted once enough honest blocks were built on top of the
block carrying it (at least ceil(c * log2(1/epsilon))), and delivered one
network delay later. Conflicting payload pairs (double spends) are never
accepted; the partial order only has to hold among accepted payloads.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..config import RunConfig
from ..errors import ConfigurationError
from ..net import HEADER_BITS, BitLedger, corrupt_sample, make_mode, message_delay
from ..sim import EventKind, RngStream
from .base import DeliveryBook, RunResult, finalize, make_engine

THRESHOLD = Fraction(1, 2)
STRATEGIES = ("silent", "junk", "withhold")
CONFIRM_CONSTANT = 1.0


def confirmations_needed(epsilon: float, c: float = CONFIRM_CONSTANT) -> int:
    if not 0 < epsilon <= 1:
        raise ConfigurationError("epsilon must lie in (0, 1]")
    return max(0, math.ceil(c * math.log2(1.0 / epsilon) - 1e-9))


@dataclass
class DagBlock:
    id: int
    refs: tuple[int, ...]
    producer: int
    time: int
    honest: bool
    payloads: tuple[str, ...]
    size_bits: int
    ancestors: int = 0  # bitmask over block ids


class BlockDag:
    def __init__(self):
        self.blocks: list[DagBlock] = [DagBlock(0, (), -1, 0, True, (), 0, 0)]

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, bid: int) -> DagBlock:
        return self.blocks[bid]

    def add(self, refs, producer: int, time: int, honest: bool, payloads=(), size_bits: int = 0) -> DagBlock:
        refs = tuple(sorted(set(refs)))
        if not refs:
            raise ConfigurationError("a non-genesis block must reference at least one block")
        anc = 0
        for r in refs:
            if r >= len(self.blocks):
                raise ConfigurationError(f"unknown referenced block {r}")
            anc |= self.blocks[r].ancestors | (1 << r)
        blk = DagBlock(len(self.blocks), refs, producer, time, honest, tuple(payloads), size_bits, anc)
        self.blocks.append(blk)
        return blk

    def is_ancestor(self, a: int, b: int) -> bool:
        return bool(self.blocks[b].ancestors >> a & 1)

    def tips(self, known=None) -> set[int]:
        ids = range(len(self.blocks)) if known is None else known
        ids = list(ids)
        referenced = {r for i in ids for r in self.blocks[i].refs}
        return {i for i in ids if i not in referenced}

    def honest_descendants(self, bid: int, known=None) -> int:
        ids = range(bid + 1, len(self.blocks)) if known is None else known
        return sum(1 for i in ids if self.blocks[i].honest and self.is_ancestor(bid, i))


def spectre_step(dag: BlockDag, producers, views: dict[int, set[int]], time: int, honest_of,
                 payload_of=lambda i: (), size_of=lambda refs, payloads: 0) -> list[DagBlock]:
    """Every producer mines one block referencing all tips in its own view."""
    out = []
    for i in producers:
        refs = dag.tips(views[i]) if views.get(i) else {0}
        payloads = payload_of(i)
        out.append(dag.add(refs, i, time, honest_of(i), payloads, size_of(refs, payloads)))
    return out


def spectre_confirm(dag: BlockDag, block: int, known, epsilon: float, *, elapsed_since: int | None,
                    delta: int, c: float = CONFIRM_CONSTANT, conflicting: bool = False) -> str:
    """Acceptance of a payload embedded in ``block`` from one node's view.

    ``elapsed_since`` is the number of steps since the confirmation count was
    first reached (None if not yet reached).
    """
    if conflicting:
        return "pending"
    if dag.honest_descendants(block, known) < confirmations_needed(epsilon, c):
        return "pending"
    if elapsed_since is None or elapsed_since < delta:
        return "pending"
    return "accepted"


class SpectreRun:
    def __init__(self, cfg: RunConfig):
        if cfg.strategy not in STRATEGIES:
            raise ConfigurationError(f"spectre supports strategies {STRATEGIES}, got {cfg.strategy!r}")
        self.cfg = cfg
        self.params = cfg.params
        root = RngStream(cfg.seed, ("spectre",))
        self.corruption = corrupt_sample(self.params, cfg.corruption, root.fork("corruption"), THRESHOLD,
                                         protocol="spectre")
        self.rng_mine = root.fork("mining")
        self.rng_delay = root.fork("delay")
        self.n = cfg.n
        self.delta = self.params.effective_delta
        self.mode = make_mode(cfg.synchrony, self.delta, cfg.gst)
        rate = cfg.spectre_rate if cfg.spectre_rate is not None else (cfg.p if cfg.p is not None else 0.2)
        if rate <= 0:
            raise ConfigurationError("spectre block rate must be positive")
        self.rate = rate
        w = np.asarray(self.corruption.weights, dtype=float)
        self.mine_prob = np.minimum(1.0, rate * w / w.sum())
        self.engine = make_engine(cfg)
        self.ledger = BitLedger(self.n, self.corruption.honest_mask)
        self.book = DeliveryBook(self.engine, self.corruption)
        self.honest = self.corruption.honest_mask
        self.K = confirmations_needed(cfg.epsilon)
        self.dag = BlockDag()
        self.known = [{0} for _ in range(self.n)]
        self.avail: dict[int, np.ndarray] = {0: np.zeros(self.n, dtype=np.int64)}
        self.arrivals: dict[int, list[tuple[int, np.ndarray]]] = defaultdict(list)
        self.counts: dict[int, np.ndarray] = {}  # pending block -> honest descendants known per node
        self.accept_at: dict[int, np.ndarray] = {}
        self.next_tx = 0
        self.conflicts: list[tuple[str, str]] = []
        self.conflict_ids: set[str] = set()
        self.payload_block: dict[str, int] = {}
        self.held: list[int] = []
        self.deliveries: dict[int, list[tuple[int, str]]] = defaultdict(list)

    def _size(self, refs, payload_count: int) -> int:
        return self.cfg.b * payload_count + self.cfg.kappa + HEADER_BITS + self.cfg.kappa * len(refs)

    def _delays(self) -> np.ndarray:
        if self.cfg.delay_policy == "random":
            return np.array([message_delay(self.mode, "random", self.engine.now, self.rng_delay)
                             for _ in range(self.n)])
        return np.full(self.n, message_delay(self.mode, self.cfg.delay_policy, self.engine.now, None))

    def _publish(self, blk) -> None:
        now = self.engine.now
        avail = now + self._delays()
        avail[blk.producer] = now
        for r in blk.refs:
            avail = np.maximum(avail, self.avail[r])
        self.avail[blk.id] = avail
        if blk.payloads and blk.honest:
            self.counts[blk.id] = np.zeros(self.n, dtype=np.int64)
        for t in np.unique(avail):
            if t == now:
                # this step's arrivals were already processed: the miner learns its block at once
                self._arrive(blk.id, avail == t)
            else:
                self.arrivals[int(t)].append((blk.id, avail == t))
        recv = np.ones(self.n, dtype=bool)
        recv[blk.producer] = False
        self.ledger.credit_vector(np.where(recv & self.honest, blk.size_bits, 0), f"b{blk.id}")
        if self.engine.records(EventKind.MESSAGE_DELIVERY):
            for i in np.flatnonzero(recv):
                self.engine.emit(EventKind.MESSAGE_DELIVERY, int(i), blk.size_bits, f"b{blk.id}")

    def _arrive(self, bid: int, mask: np.ndarray) -> None:
        for i in np.flatnonzero(mask):
            self.known[i].add(bid)
        if not self.dag[bid].honest:
            return
        for pb, cnt in self.counts.items():
            if pb != bid and self.dag.is_ancestor(pb, bid):
                cnt[mask] += 1

    def _process_arrivals(self, now: int) -> None:
        for bid, mask in self.arrivals.pop(now, []):
            self._arrive(bid, mask)
        for pb, cnt in list(self.counts.items()):
            reached = (cnt >= self.K) & (self.avail[pb] <= now)
            acc = self.accept_at.get(pb)
            if acc is None:
                acc = self.accept_at[pb] = np.full(self.n, -1, dtype=np.int64)
            new = reached & (acc < 0)
            if new.any():
                acc[new] = now
                for i in np.flatnonzero(new & self.honest):
                    self.deliveries[now + self.delta].append((int(i), pb))
            if (acc[self.honest] >= 0).all():
                del self.counts[pb]

    def _mine(self, now: int) -> None:
        hits = np.flatnonzero(self.rng_mine.np.random(self.n) < self.mine_prob)
        strat = self.cfg.strategy
        cfg = self.cfg
        for i in hits.tolist():
            refs = self.dag.tips(self.known[i])
            if self.honest[i]:
                payloads: tuple[str, ...] = ()
                if self.next_tx < cfg.tx_count:
                    payloads = (f"tx{self.next_tx}",)
                    self.next_tx += 1
                elif len(self.conflicts) < cfg.conflicts:
                    k = len(self.conflicts)
                    payloads = (f"ds{k}a",)
                    self.conflicts.append((f"ds{k}a", f"ds{k}b"))
                elif self.conflicts and any(f"ds{k}b" not in self.payload_block for k in range(len(self.conflicts))):
                    k = next(k for k in range(len(self.conflicts)) if f"ds{k}b" not in self.payload_block)
                    payloads = (f"ds{k}b",)
                # untracked background load keeps honest blocks full once the workload is exhausted
                blk = self.dag.add(refs, i, now, True, payloads, self._size(refs, 1))
                for m in payloads:
                    self.payload_block[m] = blk.id
                    if m.startswith("ds"):
                        self.conflict_ids.add(m)
                        src = int(min(self.corruption.byzantine)) if self.corruption.byzantine else i
                        self.book.broadcast(src, m, cfg.b)
                    else:
                        self.book.broadcast(i, m, cfg.b)
                self._publish(blk)
            elif strat == "junk":
                blk = self.dag.add(refs, i, now, False, (), self._size(refs, 1))
                self._publish(blk)
            elif strat == "withhold":
                blk = self.dag.add(refs, i, now, False, (), self._size(refs, 1))
                self.held.append(blk.id)
        if strat == "withhold" and self.held and now % (4 * self.delta) == 0:
            for bid in self.held:
                self._publish(self.dag[bid])
            self.held = []

    def tick(self, _node, _payload) -> None:
        now = self.engine.now
        self._process_arrivals(now)
        for i, pb in self.deliveries.pop(now, []):
            for m in self.dag[pb].payloads:
                if m not in self.conflict_ids:
                    self.book.deliver(i, m, self.cfg.b)
        self._mine(now)

    def _done(self) -> bool:
        if self.next_tx < self.cfg.tx_count:
            return False
        ids = [f"tx{j}" for j in range(self.cfg.tx_count)]
        return self.book.all_complete(ids) and len(self.conflicts) >= self.cfg.conflicts

    def _precedes(self) -> list[list[str]]:
        # payload pairs ordered by the DAG (carrying block is an ancestor)
        items = sorted(self.payload_block.items(), key=lambda kv: (kv[1], kv[0]))
        return [[a, b] for a, ba in items for b, bb in items if ba != bb and self.dag.is_ancestor(ba, bb)]

    def run(self) -> RunResult:
        cfg, eng = self.cfg, self.engine
        eng.on(EventKind.PROTOCOL_TICK, self.tick)
        honest_rate = self.rate * (1 - float(self.corruption.byzantine_weight))
        horizon = cfg.max_time or int((cfg.tx_count + cfg.conflicts * 2 + self.K + 10) / honest_rate * 4
                                      + 20 * self.delta)
        t = 0
        while t <= horizon:
            eng.schedule(t, EventKind.PROTOCOL_TICK, -1)
            eng.run_until(t)
            if cfg.max_time is None and self._done():
                break
            t += 1
        extras = dict(dag=self.dag, confirmations=self.K, rate=self.rate, conflicts=self.conflicts,
                      payload_block=self.payload_block)
        trace = finalize(eng, cfg, self.ledger, self.corruption, order="partial",
                         conflicts=[list(c) for c in self.conflicts], precedes=self._precedes())
        return RunResult("spectre", cfg, trace, self.ledger, self.corruption, extras)


def run_spectre(cfg: RunConfig) -> RunResult:
    return SpectreRun(cfg).run()
