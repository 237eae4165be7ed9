"""HoneyBadgerBFT: asynchronous common subset from n reliable broadcasts and n binary agreements.

The protocol runs in lockstep message steps of length delta. In every step
each honest node hears the same honest traffic, so honest-side counts are
shared per instance and only byzantine equivocation differs per receiver.
That lets every sub-instance of an epoch be simulated as numpy arrays:
RBC/BA state has shape (instances, honest nodes).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..config import RunConfig
from ..errors import ConfigurationError, SafetyViolation
from ..net import HEADER_BITS, BitLedger, LockstepNet, corrupt_sample
from ..sim import EventKind, RngStream
from .base import DeliveryBook, RunResult, finalize, make_engine

THRESHOLD = Fraction(1, 3)
STRATEGIES = ("silent", "equivocate", "delay-max")
ERASURE_FACTOR = 3  # fragment = ceil(c * |m| / n)
BA_ROUND_STEPS = 4


def fault_bound(n: int) -> int:
    return (n - 1) // 3


def batch_size(cfg: RunConfig) -> int:
    if cfg.batch_policy == "hbbft":
        n = cfg.n
        return max(1, math.ceil(cfg.batch_multiplier * n * n * math.log2(n) * cfg.kappa))
    return cfg.b


def fragment_bits(msg_bits: int, n: int, kappa: int, c: int = ERASURE_FACTOR) -> int:
    """ECHO/VAL size: erasure fragment, Merkle root, signature and branch, header."""
    return math.ceil(c * msg_bits / n) + 2 * kappa + math.ceil(math.log2(n)) * kappa + HEADER_BITS


def ready_bits(kappa: int) -> int:
    return 2 * kappa + HEADER_BITS


def ba_bits(kappa: int) -> int:
    return kappa + HEADER_BITS


class Charges:
    """Message counts per absolute step: step -> size -> per-node send counts."""

    def __init__(self, n: int):
        self.n = n
        self.by_step: dict[int, dict[int, np.ndarray]] = defaultdict(dict)

    def add(self, step: int, size: int, counts: np.ndarray) -> None:
        slot = self.by_step[step]
        if size in slot:
            slot[size] = slot[size] + counts
        else:
            slot[size] = np.asarray(counts, dtype=np.int64).copy()

    def add_nodes(self, step: int, size: int, nodes, times: int = 1) -> None:
        counts = np.zeros(self.n, dtype=np.int64)
        np.add.at(counts, np.asarray(list(nodes), dtype=np.int64), times)
        self.add(step, size, counts)

    def total_honest_bits(self, honest: np.ndarray) -> int:
        total = 0
        h = honest.astype(np.int64)
        for slot in self.by_step.values():
            for size, counts in slot.items():
                total += int(((counts.sum() - counts) * h).sum()) * size
        return total


# -- reliable broadcast ----------------------------------------------------------

@dataclass
class RbcOutcome:
    deliver_step: int | None  # step at which every honest node delivers, None if never
    root: str | None


def rbc_instance(sender: int, sender_honest: bool, strategy: str, n: int, byz: list[int],
                 honest: np.ndarray, msg_bits: int, kappa: int, charges: Charges, start: int = 0) -> RbcOutcome:
    """Bracha-style erasure-coded reliable broadcast of one value (VAL, ECHO, READY)."""
    t = fault_bound(n)
    f = len(byz)
    frag = fragment_bits(msg_bits, n, kappa)
    rdy = ready_bits(kappa)
    hon = np.flatnonzero(honest)
    nh = hon.size
    # byzantine non-senders: equivocators echo bogus roots, delay-max ones echo late
    if strategy == "equivocate" and f:
        charges.add_nodes(start + 2, frag, byz)
        charges.add_nodes(start + 3, rdy, byz)
    elif strategy == "delay-max" and f:
        charges.add_nodes(start + 3, frag, byz)
        charges.add_nodes(start + 4, rdy, byz)
    if sender_honest or strategy == "delay-max":
        lag = 0 if sender_honest else 1
        charges.add_nodes(start + 1 + lag, frag, [sender])
        charges.add_nodes(start + 2 + lag, frag, hon)
        charges.add_nodes(start + 3 + lag, rdy, hon)
        if nh >= n - t:
            return RbcOutcome(start + 3 + lag, "root")
        return RbcOutcome(None, None)
    if strategy == "silent":
        return RbcOutcome(None, None)
    # equivocating sender: two roots to the two halves of the honest nodes
    charges.add_nodes(start + 1, frag, [sender], times=1)
    half_a = (nh + 1) // 2
    charges.add_nodes(start + 2, frag, hon)
    echo_a = half_a + f  # other byzantine nodes echo whatever helps
    if echo_a >= n - t:
        charges.add_nodes(start + 3, rdy, hon)
        return RbcOutcome(start + 3, "rootA")
    return RbcOutcome(None, None)


def rbc_run(sender: int, msg_bits: int, n: int, *, byzantine=(), strategy: str = "silent",
            kappa: int = 64) -> tuple[np.ndarray, int]:
    """Single RBC instance. Returns (per-node delivery step or -1, honest bits received)."""
    honest = np.ones(n, dtype=bool)
    for b in byzantine:
        honest[b] = False
    charges = Charges(n)
    out = rbc_instance(sender, bool(honest[sender]), strategy, n, sorted(byzantine), honest, msg_bits,
                       kappa, charges)
    steps = np.where(honest, out.deliver_step if out.deliver_step is not None else -1, -1)
    return steps, charges.total_honest_bits(honest)


# -- binary agreement ------------------------------------------------------------

@dataclass
class BaOutcome:
    decision: np.ndarray  # (m, h) decided bit per honest node
    decide_step: np.ndarray  # (m, h) step offset at which each node decided
    rounds: np.ndarray  # (m,) rounds until the last honest node decided
    charges: list[tuple[int, np.ndarray, int]] = field(default_factory=list)  # (offset, honest counts, per-byz count)


def _prefer(cnt0: np.ndarray, cnt1: np.ndarray, ok0: np.ndarray, ok1: np.ndarray) -> np.ndarray:
    w = np.full(cnt0.shape, -1, dtype=np.int8)
    both = ok0 & ok1
    w[ok0 & ~ok1] = 0
    w[ok1 & ~ok0] = 1
    w[both] = np.where(cnt1[both] > cnt0[both], 1, 0)
    return w


def ba_run(proposals, rng: RngStream, *, n: int | None = None, f: int = 0, strategy: str = "silent",
           max_rounds: int = 256) -> BaOutcome:
    """Vectorised randomized binary agreement with a perfect common coin.

    ``proposals`` has shape (m, h): m independent instances, h honest nodes.
    Each round takes four message steps: BVAL, relayed BVAL (with AUX),
    AUX, coin share. A node decides v when the values it accepted are exactly
    {v} and the coin equals v; a decided node broadcasts TERM(v), which others
    count as BVAL(v)/AUX(v) and t+1 of which make them decide v.
    """
    est = np.array(proposals, dtype=np.int8, ndmin=2)
    m, h = est.shape
    n = h + f if n is None else n
    t = fault_bound(n)
    if f > t:
        raise ConfigurationError(f"{f} byzantine nodes exceed the fault bound {t} for n={n}")
    equiv = strategy == "equivocate"
    lateness = 1 if strategy == "delay-max" else 0
    decided = np.full((m, h), -1, dtype=np.int8)
    dstep = np.full((m, h), -1, dtype=np.int64)
    charges: list[tuple[int, np.ndarray, int]] = []
    half = np.zeros(h, dtype=bool)
    half[(h + 1) // 2:] = True  # receivers that get the equivocators' AUX(1)
    rounds = np.zeros(m, dtype=np.int64)

    def charge(offset: int, counts_mh: np.ndarray, byz_each: int) -> None:
        counts = counts_mh.sum(axis=0) if counts_mh.ndim == 2 else counts_mh
        if counts.any():
            charges.append((offset, counts.astype(np.int64), 0))
        if byz_each:
            # delay-max equivocators' traffic lands one step late
            charges.append((offset + lateness, np.zeros(h, dtype=np.int64), byz_each))

    for r in range(max_rounds):
        active = decided < 0
        live = active.any(axis=1)
        if not live.any():
            break
        base = BA_ROUND_STEPS * r
        term0 = (decided == 0).sum(axis=1)
        term1 = (decided == 1).sum(axis=1)
        # t+1 TERM(v) messages settle the instance for everyone still running
        for v, tc in ((0, term0), (1, term1)):
            hit = (tc >= t + 1)[:, None] & active
            decided[hit] = v
            dstep[hit] = base + 1
        active = decided < 0
        live = active.any(axis=1)
        if not live.any():
            break
        rounds[live] = r + 1
        n_live = int(live.sum())
        byz_msgs = f and n_live
        # s0: BVAL(est)
        send0 = active & (est == 0)
        send1 = active & (est == 1)
        charge(base + 1, send0.astype(np.int64) + send1, (2 if equiv else 1) * n_live if f and strategy != "silent" else 0)
        extra = f if equiv else 0
        cnt0 = send0.sum(axis=1) + term0 + extra
        cnt1 = send1.sum(axis=1) + term1 + extra
        # s1: relay values with t+1 support, AUX on a value with 2t+1 support
        relay0 = active & ~send0 & (cnt0 >= t + 1)[:, None]
        relay1 = active & ~send1 & (cnt1 >= t + 1)[:, None]
        w1 = _prefer(cnt0, cnt1, cnt0 >= 2 * t + 1, cnt1 >= 2 * t + 1)
        aux_early = active & (w1 >= 0)[:, None]
        charge(base + 2, relay0.astype(np.int64) + relay1 + aux_early, 0)
        c0 = cnt0 + relay0.sum(axis=1)
        c1 = cnt1 + relay1.sum(axis=1)
        bin0 = c0 >= 2 * t + 1
        bin1 = c1 >= 2 * t + 1
        w2 = _prefer(c0, c1, bin0, bin1)
        w = np.where(w1 >= 0, w1, w2)
        aux_late = active & (w1 < 0)[:, None] & (w2 >= 0)[:, None]
        charge(base + 3, aux_late.astype(np.int64), n_live if f and strategy != "silent" else 0)
        # s3: collect AUX; equivocators show AUX(0) to one half of the receivers and AUX(1) to the other
        aux0 = ((w == 0)[:, None] & active).sum(axis=1) + term0
        aux1 = ((w == 1)[:, None] & active).sum(axis=1) + term1
        has0 = bin0[:, None] & ((aux0 > 0)[:, None] | (equiv and f > 0) & ~half[None, :])
        has1 = bin1[:, None] & ((aux1 > 0)[:, None] | (equiv and f > 0) & half[None, :])
        charge(base + 4, active.astype(np.int64), n_live if f and strategy != "silent" else 0)
        # s4: coin revealed
        coin = rng.np.integers(0, 2, size=m).astype(np.int8)
        single = has0 ^ has1
        v = np.where(has1, 1, 0).astype(np.int8)
        win = active & single & (v == coin[:, None])
        decided[win] = v[win]
        dstep[win] = base + BA_ROUND_STEPS
        charge(base + BA_ROUND_STEPS + 1, win.astype(np.int64), 0)  # TERM
        est = np.where(active & single, v, np.where(active, coin[:, None], est)).astype(np.int8)
    else:
        raise ConfigurationError("binary agreement did not terminate within the round cap")
    return BaOutcome(decided, dstep, rounds, charges)


# -- asynchronous common subset and the epoch driver ------------------------------

@dataclass
class AcsOutcome:
    output: list[int]  # agreed instance indices (identical across honest nodes)
    output_step: int
    deliver_step: dict[int, int | None]
    ba_rounds: np.ndarray
    charges: Charges


def acs_run(n: int, byzantine, strategy: str, msg_bits: int, kappa: int, rng: RngStream,
            start: int = 0) -> AcsOutcome:
    honest = np.ones(n, dtype=bool)
    for b in byzantine:
        honest[b] = False
    byz = sorted(byzantine)
    f = len(byz)
    t = fault_bound(n)
    h = int(honest.sum())
    hon_idx = np.flatnonzero(honest)
    charges = Charges(n)
    deliver: dict[int, int | None] = {}
    for j in range(n):
        out = rbc_instance(j, bool(honest[j]), strategy, n, byz, honest, msg_bits, kappa, charges, start)
        deliver[j] = out.deliver_step
    decision = np.full((n, h), -1, dtype=np.int8)
    dstep = np.full((n, h), -1, dtype=np.int64)
    rounds = np.zeros(n, dtype=np.int64)

    def run_wave(instances: list[int], bit: int, at: int, label: str) -> None:
        if not instances:
            return
        props = np.full((len(instances), h), bit, dtype=np.int8)
        res = ba_run(props, rng.fork(label), n=n, f=f, strategy=strategy)
        for k, j in enumerate(instances):
            decision[j] = res.decision[k]
            dstep[j] = res.decide_step[k] + at
            rounds[j] = res.rounds[k]
        for off, counts, byz_each in res.charges:
            full = np.zeros(n, dtype=np.int64)
            full[hon_idx] = counts
            if byz_each:
                full[byz] += byz_each
            charges.add(at + off, ba_bits(kappa), full)

    # BAs start with input 1 when their RBC delivers, grouped by delivery step
    waves: dict[int, list[int]] = defaultdict(list)
    for j, s in deliver.items():
        if s is not None:
            waves[s].append(j)
    started: set[int] = set()
    trigger = None
    for s in sorted(waves):
        if trigger is not None and s >= trigger:
            break
        run_wave(waves[s], 1, s, f"ba1@{s}")
        started.update(waves[s])
        trigger = _ones_trigger(decision, dstep, n - t)
    trigger = _ones_trigger(decision, dstep, n - t)
    if trigger is None:
        raise SafetyViolation("fewer than n-t agreements decided 1; common subset cannot complete")
    rest = [j for j in range(n) if j not in started]
    run_wave(rest, 0, trigger, f"ba0@{trigger}")
    if (decision < 0).any():
        raise SafetyViolation("an agreement instance did not decide")
    if not (decision == decision[:, :1]).all():
        raise SafetyViolation("honest nodes disagree on an agreement outcome")
    chosen = [j for j in range(n) if decision[j, 0] == 1]
    for j in chosen:
        if deliver[j] is None:
            raise SafetyViolation(f"instance {j} agreed but its broadcast never delivered")
    out_step = int(max(dstep.max(), max(deliver[j] for j in chosen)))
    # threshold decryption: one bundle of |S| shares per honest node
    charges.add_nodes(out_step + 1, len(chosen) * kappa + HEADER_BITS, hon_idx)
    return AcsOutcome(chosen, out_step, deliver, rounds, charges)


def _ones_trigger(decision: np.ndarray, dstep: np.ndarray, need: int) -> int | None:
    # step at which (every honest node has seen) n-t agreements decide 1
    steps = np.where(decision == 1, dstep, np.iinfo(np.int64).max).max(axis=1)
    ones = np.sort(steps[(decision == 1).all(axis=1)])
    if ones.size < need:
        return None
    return int(ones[need - 1])


class HoneyBadgerRun:
    def __init__(self, cfg: RunConfig):
        if cfg.strategy not in STRATEGIES:
            raise ConfigurationError(f"hbbft supports strategies {STRATEGIES}, got {cfg.strategy!r}")
        self.cfg = cfg
        self.params = cfg.params
        root = RngStream(cfg.seed, ("hbbft",))
        self.corruption = corrupt_sample(self.params, cfg.corruption, root.fork("corruption"), THRESHOLD,
                                         protocol="hbbft")
        self.coin = root.fork("coin")
        self.n = cfg.n
        if len(self.corruption.byzantine) > fault_bound(self.n):
            raise ConfigurationError(f"{len(self.corruption.byzantine)} byzantine nodes exceed (n-1)/3")
        self.delta = self.params.effective_delta
        self.engine = make_engine(cfg)
        self.ledger = BitLedger(self.n, self.corruption.honest_mask)
        self.net = LockstepNet(self.engine, self.corruption, self.ledger, self.delta)
        self.book = DeliveryBook(self.engine, self.corruption)
        self.b = batch_size(cfg)
        self.msg_bits = self.b + cfg.kappa  # ciphertext carries a kappa-bit overhead

    def run(self) -> RunResult:
        cfg, eng, n = self.cfg, self.engine, self.n
        byz = self.corruption.byzantine
        honest = self.corruption.honest_mask
        epochs = []
        start = 0
        schedule: dict[int, list] = defaultdict(list)
        for e in range(cfg.epochs):
            acs = acs_run(n, byz, cfg.strategy, self.msg_bits, cfg.kappa, self.coin.fork(f"epoch{e}"), start)
            epochs.append(dict(start=start, output=acs.output, output_step=acs.output_step,
                               ba_rounds=acs.ba_rounds.tolist(), size=len(acs.output)))
            for step, slot in acs.charges.by_step.items():
                for size, counts in slot.items():
                    self.net.charge_counts(step, counts, size, tag=f"e{e}")
            schedule[start].append(("broadcast", e, acs))
            schedule[acs.output_step + 1].append(("deliver", e, acs))
            start = acs.output_step + 1
        last = max(max(schedule), max(self.net.pending_rounds(), default=0))

        def tick(_node, step):
            self.net.flush(step)
            for kind, e, acs in schedule.get(step, ()):
                for j in range(n):
                    if kind == "broadcast" and (honest[j] or j in acs.output):
                        self.book.broadcast(j, f"e{e}n{j}", self.b)
                    elif kind == "deliver" and j in acs.output:
                        self.book.deliver_many(np.flatnonzero(honest), f"e{e}n{j}", self.b)

        eng.on(EventKind.PROTOCOL_TICK, tick)
        for step in range(last + 1):
            eng.schedule(step * self.delta, EventKind.PROTOCOL_TICK, -1, step)
        eng.run_until()
        extras = dict(epochs=epochs, batch_bits=self.b, msg_bits=self.msg_bits)
        trace = finalize(eng, cfg, self.ledger, self.corruption, batch_bits=self.b)
        return RunResult("hbbft", cfg, trace, self.ledger, self.corruption, extras)


def run_hbbft(cfg: RunConfig) -> RunResult:
    return HoneyBadgerRun(cfg).run()
