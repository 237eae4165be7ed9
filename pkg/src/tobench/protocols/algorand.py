"""Algorand: sortition-elected proposers and per-step committees voting to all nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..config import RunConfig
from ..errors import ConfigurationError
from ..net import HEADER_BITS, BitLedger, LockstepNet, StubSizes, corrupt_sample
from ..sim import EventKind, RngStream
from .base import DeliveryBook, RunResult, finalize, make_engine

THRESHOLD = Fraction(1, 3)
STRATEGIES = ("silent", "equivocate")


def committee_size(kappa: int, gap: Fraction | float = Fraction(1, 12)) -> int:
    """Smallest k with exp(-2 gap^2 k) <= 2^-kappa (Chernoff bound on the byzantine share)."""
    g = float(gap)
    if g <= 0:
        raise ConfigurationError("committee gap must be positive")
    return max(1, math.ceil(kappa * math.log(2) / (2 * g * g) - 1e-9))


def proposer_prob(kappa: int, n: int) -> float:
    """Per-node probability making P[no proposer] = 2^-kappa under independent election."""
    return -math.expm1(-kappa * math.log(2) / n)


@dataclass(frozen=True)
class SortitionParams:
    n: int
    kappa: int
    committee_target: int
    proposer_prob: float

    @classmethod
    def build(cls, n: int, kappa: int, gap=Fraction(1, 12)) -> "SortitionParams":
        return cls(n, kappa, committee_size(kappa, gap), proposer_prob(kappa, n))

    @property
    def committee_prob(self) -> float:
        return min(1.0, self.committee_target / self.n)

    def prob(self, role: str) -> float:
        if role == "proposer":
            return self.proposer_prob
        if role == "committee":
            return self.committee_prob
        raise ConfigurationError(f"unknown sortition role {role!r}")


def sortition(node: int, role: str, params: SortitionParams, rng: RngStream,
              weights: np.ndarray | None = None) -> tuple[bool, int]:
    """Weighted Bernoulli self-election. Returns (elected, proof bits)."""
    w = 1.0 if weights is None else float(weights[node]) * params.n / float(np.sum(weights))
    elected = rng.py.random() < min(1.0, params.prob(role) * w)
    return elected, 2 * params.kappa


def sortition_all(role: str, params: SortitionParams, rng: RngStream) -> np.ndarray:
    """Election outcome of every node for one role and step (boolean mask)."""
    return rng.np.random(params.n) < params.prob(role)


def vote_bits(kappa: int) -> int:
    s = StubSizes(kappa)
    return s.hash + s.signature + s.vrf_proof + HEADER_BITS


def proposal_bits(b: int, kappa: int) -> int:
    s = StubSizes(kappa)
    return b + s.vrf_proof + s.signature + HEADER_BITS


class AlgorandRun:
    def __init__(self, cfg: RunConfig):
        if cfg.strategy not in STRATEGIES:
            raise ConfigurationError(f"algorand supports strategies {STRATEGIES}, got {cfg.strategy!r}")
        self.cfg = cfg
        self.params = cfg.params
        root = RngStream(cfg.seed, ("algorand",))
        self.corruption = corrupt_sample(self.params, cfg.corruption, root.fork("corruption"), THRESHOLD,
                                         protocol="algorand")
        self.rng = root.fork("sortition")
        self.n = cfg.n
        self.delta = self.params.effective_delta
        self.sp = SortitionParams.build(cfg.n, cfg.kappa, cfg.committee_gap)
        self.engine = make_engine(cfg)
        self.ledger = BitLedger(self.n, self.corruption.honest_mask)
        self.net = LockstepNet(self.engine, self.corruption, self.ledger, self.delta)
        self.book = DeliveryBook(self.engine, self.corruption)
        self.honest = self.corruption.honest_mask

    def run(self) -> RunResult:
        cfg, n = self.cfg, self.n
        R = cfg.steps_R
        if R < 1:
            raise ConfigurationError("steps_R must be >= 1")
        pbits = proposal_bits(cfg.b, cfg.kappa)
        vbits = vote_bits(cfg.kappa)
        equiv = cfg.strategy == "equivocate"
        honest = self.honest
        first_honest = int(np.flatnonzero(honest)[0])
        events: dict[int, list] = {}
        step = 0
        log = []
        attempts = 0
        max_attempts = 64 * max(1, cfg.heights)
        for h in range(cfg.heights):
            msg = f"blk{h}"
            events.setdefault(step, []).append(("broadcast", msg))
            while True:
                attempts += 1
                if attempts > max_attempts:
                    raise ConfigurationError("algorand made no progress within the attempt cap")
                props = sortition_all("proposer", self.sp, self.rng)
                hp = props & honest
                bp = props & ~honest
                prio = self.rng.np.random(n)
                counts = hp.astype(np.int64)
                if equiv:
                    counts = counts + 2 * bp  # two conflicting blocks, each to everyone
                self.net.charge_counts(step + 1, counts, pbits, tag=f"prop{h}")
                ok = bool(hp.any())
                if ok and bp.any() and equiv:
                    # an equivocating lowest-priority proposer makes the round settle on the empty block
                    ok = prio[hp].min() < prio[bp].min()
                members = []
                for s in range(R):
                    c = sortition_all("committee", self.sp, self.rng)
                    hm = int((c & honest).sum())
                    bm = int((c & ~honest).sum())
                    members.append((hm, bm))
                    self.net.charge_counts(step + 2 + s, (c & honest) | ((c & ~honest) if equiv else False), vbits,
                                           tag=f"vote{h}.{s}")
                    if not (hm >= 1 and hm > 2 * bm):
                        ok = False
                step += 1 + R
                log.append(dict(height=h, proposers=int(props.sum()), honest_proposers=int(hp.sum()),
                                committees=members, final=ok))
                if ok:
                    events.setdefault(step, []).append(("deliver", msg))
                    break
        last = max(step, max(self.net.pending_rounds(), default=0))
        hon_idx = np.flatnonzero(honest)

        def tick(_node, s):
            self.net.flush(s)
            for kind, msg in events.get(s, ()):
                if kind == "broadcast":
                    self.book.broadcast(first_honest, msg, cfg.b)
                else:
                    self.book.deliver_many(hon_idx, msg, cfg.b)

        self.engine.on(EventKind.PROTOCOL_TICK, tick)
        for s in range(last + 1):
            self.engine.schedule(s * self.delta, EventKind.PROTOCOL_TICK, -1, s)
        self.engine.run_until()
        extras = dict(rounds=log, committee_target=self.sp.committee_target,
                      proposer_prob=self.sp.proposer_prob, attempts=attempts)
        trace = finalize(self.engine, cfg, self.ledger, self.corruption)
        return RunResult("algorand", cfg, trace, self.ledger, self.corruption, extras)


def run_algorand(cfg: RunConfig) -> RunResult:
    return AlgorandRun(cfg).run()
