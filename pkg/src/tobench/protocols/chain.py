"""Longest-chain protocols driven by a leader schedule: Nakamoto, Ouroboros, Snow White.

All three share the same backbone: elected nodes extend the longest chain
they know and broadcast the block; a payload is TO-delivered once the block
carrying it is ``k`` blocks deep in the node's chain. They differ only in how
leaders are elected and in the round length (Snow White elects every step).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..config import RunConfig
from ..errors import ConfigurationError
from ..net import BitLedger, CorruptionMap, HEADER_BITS, ModelParams, as_fraction, corrupt_sample, make_mode, message_delay
from ..sim import EventKind, RngStream
from .base import DeliveryBook, RunResult, finalize, make_engine

GENESIS = 0
THRESHOLD = Fraction(1, 2)
STRATEGIES = ("silent", "mimic", "private_fork", "withhold")


@dataclass(slots=True)
class Block:
    id: int
    parent: int
    producer: int
    round: int
    payload_bits: int
    honest: bool
    height: int = 0
    payloads: tuple[str, ...] = ()
    included: int = 0  # bitmask of payload indices on the chain ending here
    size_bits: int = 0
    public: bool = True


class BlockTree:
    """Every block ever produced, indexed by id; genesis has id 0."""

    def __init__(self):
        self.blocks: list[Block] = [Block(GENESIS, -1, -1, 0, 0, True, 0)]
        self.children: dict[int, list[int]] = defaultdict(list)

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, bid: int) -> Block:
        return self.blocks[bid]

    def new_block(self, parent: int, producer: int, round_: int, payload_bits: int, honest: bool,
                  payloads: tuple[str, ...] = (), payload_mask: int = 0, size_bits: int = 0,
                  public: bool = True) -> Block:
        par = self.blocks[parent]
        blk = Block(len(self.blocks), parent, producer, round_, payload_bits, honest, par.height + 1,
                    payloads, par.included | payload_mask, size_bits, public)
        self.blocks.append(blk)
        self.children[parent].append(blk.id)
        return blk

    def ancestor_at(self, bid: int, height: int) -> int:
        blk = self.blocks[bid]
        while blk.height > height:
            blk = self.blocks[blk.parent]
        return blk.id

    def chain(self, tip: int) -> list[int]:
        """Block ids from the first block after genesis up to ``tip``."""
        out = []
        while tip != GENESIS:
            out.append(tip)
            tip = self.blocks[tip].parent
        out.reverse()
        return out

    def public_ids(self) -> list[int]:
        return [b.id for b in self.blocks[1:] if b.public]

    @property
    def tips(self) -> set[int]:
        pub = [b.id for b in self.blocks if b.public]
        has_child = {self.blocks[c].parent for c in pub if c != GENESIS}
        return {b for b in pub if b not in has_child}

    def longest_tip(self) -> int:
        best = GENESIS
        for b in self.blocks:
            if b.public and (b.height > self.blocks[best].height
                             or (b.height == self.blocks[best].height and b.id < best)):
                best = b.id
        return best


def committed_prefix(tree: BlockTree, k: int, tip: int | None = None) -> list[int]:
    if k < 0:
        raise ConfigurationError("k must be >= 0")
    chain = tree.chain(tree.longest_tip() if tip is None else tip)
    return chain[: max(0, len(chain) - k)]


def orphan_ratio(tree: BlockTree) -> float:
    public = tree.public_ids()
    if not public:
        return 0.0
    main = set(tree.chain(tree.longest_tip()))
    return sum(1 for b in public if b not in main) / len(public)


# -- leader schedules ---------------------------------------------------------

@dataclass
class LeaderSchedule:
    kind: str
    n: int
    weights: np.ndarray
    prob: float  # nakamoto: per-round total block probability; snowwhite: per node per step
    awake: np.ndarray | None = None  # (rounds, n) for snowwhite
    round_len: int = 1

    def elected(self, round_: int, rng: RngStream) -> np.ndarray:
        if self.kind == "ouroboros":
            return np.array([rng.np.choice(self.n, p=self.weights)])
        if self.kind == "nakamoto":
            draws = rng.np.random(self.n)
            return np.flatnonzero(draws < self.weights * self.prob)
        draws = rng.np.random(self.n)
        hit = draws < self.prob
        if self.awake is not None:
            hit &= self.awake[round_ % len(self.awake)]
        return np.flatnonzero(hit)

    def elect(self, round_: int, node: int, rng: RngStream) -> bool:
        return bool(node in set(self.elected(round_, rng).tolist()))


def sleepy_assign(params: ModelParams, fraction_asleep, rng: RngStream, rounds: int,
                  byzantine: frozenset[int] = frozenset()) -> np.ndarray:
    """Per-round awake map. Byzantine nodes are always awake; each honest node
    sleeps independently so that ``fraction_asleep`` of all nodes sleep on average."""
    asleep = as_fraction(fraction_asleep)
    awake_honest = 1 - params.alpha - asleep
    if not awake_honest > params.alpha:
        raise ConfigurationError(
            f"awake honest fraction {awake_honest} must exceed byzantine fraction {params.alpha}")
    n = params.n
    awake = np.ones((rounds, n), dtype=bool)
    if asleep == 0:
        return awake
    q = float(asleep / (1 - params.alpha))
    honest = np.array([i not in byzantine for i in range(n)])
    awake[:, honest] = rng.np.random((rounds, int(honest.sum()))) >= q
    return awake


# -- the run ------------------------------------------------------------------

class ChainRun:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.params = cfg.params
        if cfg.strategy not in STRATEGIES:
            raise ConfigurationError(f"chain protocols support strategies {STRATEGIES}, got {cfg.strategy!r}")
        root = RngStream(cfg.seed, (cfg.protocol,))
        self.rng_corrupt = root.fork("corruption")
        self.rng_elect = root.fork("election")
        self.rng_delay = root.fork("delay")
        self.rng_sleep = root.fork("sleep")
        n = cfg.n
        self.n = n
        self.delta = self.params.effective_delta
        self.corruption = corrupt_sample(self.params, cfg.corruption, self.rng_corrupt, THRESHOLD,
                                         protocol=cfg.protocol)
        self.honest = self.corruption.honest_mask
        self.byz = np.flatnonzero(~self.honest)
        self.k = cfg.confirmations
        self.kappa = cfg.kappa
        self.engine = make_engine(cfg)
        self.ledger = BitLedger(n, self.honest)
        self.book = DeliveryBook(self.engine, self.corruption)
        self.mode = make_mode(cfg.synchrony, self.delta, cfg.gst)
        self.tree = BlockTree()
        self.schedule = self._make_schedule()
        self.round_len = self.schedule.round_len
        # per-node views
        self.known: dict[int, np.ndarray] = {GENESIS: np.ones(n, dtype=bool)}
        self.tip = np.zeros(n, dtype=np.int64)
        self.tip_h = np.zeros(n, dtype=np.int64)
        self.committed_h = np.zeros(n, dtype=np.int64)
        self.committed_id = np.zeros(n, dtype=np.int64)
        self.arrivals: dict[int, list[tuple[int, np.ndarray]]] = defaultdict(list)
        self.waiting: dict[int, list[tuple[int, np.ndarray]]] = defaultdict(list)
        self.violations: list[tuple[int, int]] = []
        # workload
        self.tx_times = [1 + j * cfg.tx_interval for j in range(cfg.tx_count)]
        self.tx_bits = cfg.b
        self.bcast_mask = 0
        self.honest_ids = np.flatnonzero(self.honest)
        # adversary
        self.private_tip = GENESIS
        self.private_blocks: list[int] = []
        self.held: list[tuple[int, int]] = []  # (release_round, block id)
        self.pub_height_seen = 0
        # backbone observation
        self.snap_tips: list[np.ndarray] = []
        self.snap_times: list[int] = []

    # ---------------------------------------------------------------
    def _make_schedule(self) -> LeaderSchedule:
        cfg, n = self.cfg, self.n
        w = np.asarray(self.corruption.weights, dtype=float)
        w = w / w.sum()
        if cfg.protocol == "nakamoto":
            p = cfg.p if cfg.p is not None else 5.0 * self.delta
            prob = self.delta / p
            if prob > 1:
                raise ConfigurationError("nakamoto needs p >= delta (at most one block per round in expectation)")
            return LeaderSchedule("nakamoto", n, w, prob, round_len=self.delta)
        if cfg.protocol == "ouroboros":
            return LeaderSchedule("ouroboros", n, w, 1.0, round_len=self.delta)
        if cfg.np is not None:
            p = cfg.np / n
        else:
            p = cfg.p if cfg.p is not None else 0.1 / n
        if not 0 < p <= 1:
            raise ConfigurationError(f"snowwhite election probability must lie in (0, 1], got {p}")
        horizon = self._horizon_guess(p)
        awake = sleepy_assign(self.params, cfg.asleep_fraction, self.rng_sleep, min(horizon, 4096),
                              self.corruption.byzantine)
        return LeaderSchedule("snowwhite", n, w, p, awake=awake, round_len=1)

    def _horizon_guess(self, p: float) -> int:
        interval = 1.0 / max(p * self.n * (1 - float(self.params.alpha) - self.cfg.asleep_fraction), 1e-9)
        return int(interval * (self.k + 8) * 6 + self.delta * 10 + self.cfg.tx_count * self.cfg.tx_interval)

    def expected_interval(self) -> float:
        s = self.schedule
        if s.kind == "ouroboros":
            return float(self.round_len)
        if s.kind == "nakamoto":
            return self.round_len / s.prob
        return 1.0 / (s.prob * self.n * (1 - self.cfg.asleep_fraction))

    def header_bits(self) -> int:
        return 2 * self.kappa + HEADER_BITS  # parent hash + signature/proof + header

    # ---------------------------------------------------------------
    def _delay(self) -> int:
        return message_delay(self.mode, self.cfg.delay_policy, self.engine.now, self.rng_delay)

    def _send_block(self, blk: Block, now: int) -> None:
        """Schedule arrival of ``blk`` at every other node."""
        recv = np.ones(self.n, dtype=bool)
        recv[blk.producer] = False
        if self.cfg.delay_policy == "random":
            delays = np.array([self._delay() for _ in range(self.n)])
            for d in np.unique(delays[recv]):
                self.arrivals[now + int(d)].append((blk.id, recv & (delays == d)))
        else:
            self.arrivals[now + self._delay()].append((blk.id, recv))
        own = np.zeros(self.n, dtype=bool)
        own[blk.producer] = True
        if not self.honest[blk.producer]:
            own |= ~self.honest  # the corrupted nodes share every block they produce
        self._arrive(blk.id, own, now, charge=False)

    def _arrive(self, bid: int, mask: np.ndarray, now: int, charge: bool = True) -> None:
        blk = self.tree[bid]
        if charge:
            bits = np.where(mask & self.honest, blk.size_bits, 0)
            self.ledger.credit_vector(bits, bid)
            if self.engine.records(EventKind.MESSAGE_DELIVERY):
                for i in np.flatnonzero(mask):
                    self.engine.emit(EventKind.MESSAGE_DELIVERY, int(i), blk.size_bits, f"blk{bid}")
        parent_known = self.known.get(blk.parent)
        if parent_known is None:
            parent_known = self.known[blk.parent] = np.zeros(self.n, dtype=bool)
        ready = mask & parent_known
        late = mask & ~parent_known
        if late.any():
            self.waiting[blk.parent].append((bid, late))
        if not ready.any():
            return
        known = self.known.setdefault(bid, np.zeros(self.n, dtype=bool))
        known |= ready
        better = ready & self.honest & ((blk.height > self.tip_h) | ((blk.height == self.tip_h) & (bid < self.tip)))
        if better.any():
            self._adopt(bid, better)
        for child, cmask in self.waiting.pop(bid, []):
            self._arrive(child, cmask, now, charge=False)

    def _adopt(self, bid: int, nodes: np.ndarray) -> None:
        blk = self.tree[bid]
        idx = np.flatnonzero(nodes)
        groups: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i in idx:
            groups[(int(self.committed_h[i]), int(self.committed_id[i]))].append(int(i))
        target = blk.height - self.k
        for (ch, cid), members in groups.items():
            if self.tree.ancestor_at(bid, ch) != cid:
                self.violations.append((self.engine.now, bid))
            if target > ch:
                seg = []
                cur = self.tree.ancestor_at(bid, target)
                new_cid = cur
                while self.tree[cur].height > ch:
                    seg.append(cur)
                    cur = self.tree[cur].parent
                seg.reverse()
                for b in seg:
                    for m in self.tree[b].payloads:
                        self.book.deliver_many(members, m, self.tx_bits)
                self.committed_h[members] = target
                self.committed_id[members] = new_cid
        self.tip[idx] = bid
        self.tip_h[idx] = blk.height

    # ---------------------------------------------------------------
    def _pending_for(self, tip: int) -> tuple[tuple[str, ...], int]:
        mask = self.bcast_mask & ~self.tree[tip].included
        if not mask:
            return (), 0
        ids = tuple(f"tx{j}" for j in range(self.cfg.tx_count) if mask >> j & 1)
        return ids, mask

    def _honest_block(self, producer: int, parent: int, round_: int, public=True, honest=True) -> Block:
        payloads, mask = self._pending_for(parent)
        size = self.header_bits() + self.tx_bits * len(payloads)
        return self.tree.new_block(parent, producer, round_, self.tx_bits * len(payloads), honest,
                                   payloads, mask, size, public)

    def _junk_block(self, producer: int, parent: int, round_: int, public: bool) -> Block:
        return self.tree.new_block(parent, producer, round_, self.tx_bits, False, (), 0,
                                   self.header_bits() + self.tx_bits, public)

    def _public_best(self) -> int:
        # best block the adversary can see among released blocks (it is rushing)
        honest_tips = self.tip[self.honest]
        hs = self.tip_h[self.honest]
        top = hs.max()
        return int(honest_tips[hs == top].min())

    def _byzantine_round(self, elected_byz: list[int], round_: int, now: int) -> None:
        strat = self.cfg.strategy
        if strat == "silent":
            return
        if strat == "mimic":
            for i in elected_byz:
                blk = self._honest_block(i, self._public_best(), round_, honest=False)
                self._send_block(blk, now)
            return
        if strat == "withhold":
            hold = max(1, self.k // 2)
            for i in elected_byz:
                blk = self._junk_block(i, self._public_best(), round_, public=False)
                self.held.append((round_ + hold, blk.id))
            due = [b for r, b in self.held if r <= round_]
            self.held = [(r, b) for r, b in self.held if r > round_]
            for b in due:
                self._release(b, now)
            return
        # private_fork: selfish extension of a hidden branch
        pub = self._public_best()
        pub_h = self.tree[pub].height
        if self.tree[self.private_tip].height < pub_h:
            self.private_tip = pub
            self.private_blocks = []
        for i in elected_byz:
            blk = self._junk_block(i, self.private_tip, round_, public=False)
            self.private_tip = blk.id
            self.private_blocks.append(blk.id)
        lead = self.tree[self.private_tip].height - pub_h
        advanced = pub_h > self.pub_height_seen
        self.pub_height_seen = pub_h
        if self.private_blocks and lead <= 1 and advanced:
            for b in self.private_blocks:
                self._release(b, now)
            self.private_blocks = []

    def _release(self, bid: int, now: int) -> None:
        blk = self.tree[bid]
        blk.public = True
        self._send_block(blk, now)

    # ---------------------------------------------------------------
    def tick(self, _node, _payload) -> None:
        now = self.engine.now
        while self.tx_times and self.tx_times[0] <= now:
            self.tx_times.pop(0)
            j = self.cfg.tx_count - len(self.tx_times) - 1
            self.bcast_mask |= 1 << j
            src = int(self.honest_ids[j % len(self.honest_ids)])
            self.book.broadcast(src, f"tx{j}", self.tx_bits)
        for bid, mask in self.arrivals.pop(now, []):
            self._arrive(bid, mask, now)
        if now % self.round_len == 0:
            r = now // self.round_len
            if self.cfg.backbone:
                self.snap_times.append(now)
                self.snap_tips.append(self.tip[self.honest].copy())
            elected = self.schedule.elected(r, self.rng_elect)
            byz = []
            for i in elected.tolist():
                if self.honest[i]:
                    blk = self._honest_block(i, int(self.tip[i]), r)
                    self._send_block(blk, now)
                else:
                    byz.append(i)
            self._byzantine_round(byz, r, now)

    def done(self) -> bool:
        return not self.tx_times and self.book.all_complete()

    def run(self) -> RunResult:
        cfg = self.cfg
        eng = self.engine
        eng.on(EventKind.PROTOCOL_TICK, self.tick)
        if cfg.max_time is not None:
            horizon, fixed = cfg.max_time, True
        else:
            horizon = int(self.expected_interval() * (self.k + 8) * 8 + 20 * self.delta
                          + cfg.tx_count * cfg.tx_interval)
            fixed = False
        t = 0
        while t <= horizon:
            eng.schedule(t, EventKind.PROTOCOL_TICK, -1)
            eng.run_until(t)
            if not fixed and self.done():
                break
            t += 1
        extras = dict(tree=self.tree, violations=self.violations, round_len=self.round_len,
                      k=self.k, tips=self.tip.copy(), orphan_ratio=orphan_ratio(self.tree),
                      snap_times=self.snap_times, snap_tips=self.snap_tips,
                      expected_interval=self.expected_interval())
        meta = dict(round_len=self.round_len, k=self.k, expected_interval=self.expected_interval())
        if cfg.backbone:
            meta.update(chain_parents=[max(0, b.parent) for b in self.tree.blocks],
                        chain_honest=[bool(b.honest) for b in self.tree.blocks],
                        snap_times=[int(t) for t in self.snap_times],
                        snap_tips=[[int(x) for x in row] for row in self.snap_tips])
        trace = finalize(eng, cfg, self.ledger, self.corruption, **meta)
        return RunResult(cfg.protocol, cfg, trace, self.ledger, self.corruption, extras)


def run_chain(cfg: RunConfig) -> RunResult:
    return ChainRun(cfg).run()
