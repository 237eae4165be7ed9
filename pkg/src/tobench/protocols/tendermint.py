"""Tendermint: per-height rounds of propose / prevote / precommit with round-robin leaders."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from ..config import RunConfig
from ..errors import ConfigurationError, SafetyViolation
from ..net import BitLedger, HEADER_BITS, Network, NetMessage, StubSizes, corrupt_sample, make_mode
from ..sim import EventKind, RngStream
from .base import DeliveryBook, RunResult, finalize, make_engine

THRESHOLD = Fraction(1, 3)
STRATEGIES = ("silent", "equivocate", "delay-max")
NIL = None

PROPOSE, PREVOTE, PRECOMMIT = "propose", "prevote", "precommit"


def tendermint_leader(height: int, round_: int, n: int) -> int:
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    return (height + round_) % n


def worst_order(n: int):
    """Corrupting the first rotation slots of height 0 delays the first commit the most."""
    return lambda f: range(n)


def quorum(count: int, n: int) -> bool:
    return 3 * count > 2 * n


@dataclass
class TendermintState:
    height: int = 0
    round: int = 0
    step: str = PROPOSE
    locked: str | None = None
    timeout: int = 0
    # (kind, height, round) -> {sender: value} and -> {value: count}
    votes: dict = field(default_factory=lambda: defaultdict(dict))
    tally: dict = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))
    proposals: dict = field(default_factory=dict)
    timers_set: set = field(default_factory=set)
    # height -> (round, value) once a precommit quorum for a block was seen
    ready: dict = field(default_factory=dict)


class TendermintRun:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.params = cfg.params
        if cfg.strategy not in STRATEGIES:
            raise ConfigurationError(f"tendermint supports strategies {STRATEGIES}, got {cfg.strategy!r}")
        n = cfg.n
        self.n = n
        root = RngStream(cfg.seed, ("tendermint",))
        self.corruption = corrupt_sample(self.params, cfg.corruption, root.fork("corruption"), THRESHOLD,
                                         worst=worst_order(n), protocol="tendermint")
        self.delta = self.params.effective_delta
        self.engine = make_engine(cfg)
        self.ledger = BitLedger(n, self.corruption.honest_mask)
        sender_policy = {}
        if cfg.strategy == "delay-max":
            sender_policy = {i: "max" for i in self.corruption.byzantine}
        self.net = Network(self.engine, n, self.corruption, make_mode(cfg.synchrony, self.delta, cfg.gst),
                           cfg.delay_policy, root.fork("delay"), self.ledger, sender_policy)
        self.net.on_message = self.on_message
        self.engine.on(EventKind.TIMER_FIRE, self.on_timer)
        self.book = DeliveryBook(self.engine, self.corruption)
        self.sizes = StubSizes(cfg.kappa)
        self.vote_bits = self.sizes.vote
        self.proposal_bits = cfg.b
        self.timeout = cfg.timeout_factor * self.delta
        self.state = [TendermintState() for _ in range(n)]
        self.commits: dict[int, dict[int, str]] = defaultdict(dict)  # height -> node -> value
        self.rounds_used: dict[int, int] = {}
        self.height_start: dict[int, int] = {}
        self.honest = [self.corruption.is_honest(i) for i in range(n)]
        self.first_honest = self.honest.index(True)
        self.active = [h or cfg.strategy == "delay-max" for h in self.honest]
        self._byz_rounds: set = set()
        self._done_count = 0

    # -- helpers -----------------------------------------------------
    def value_for(self, h: int) -> str:
        return f"blk{h}"

    def _start_height(self, i: int, h: int) -> None:
        if h >= self.cfg.heights:
            self.state[i].height = h
            return
        if h not in self.height_start:
            self.height_start[h] = self.engine.now
            self.book.broadcast(self.first_honest, self.value_for(h), self.cfg.b)
        st = self.state[i]
        st.height, st.locked = h, None
        self._start_round(i, 0)

    def _start_round(self, i: int, r: int) -> None:
        st = self.state[i]
        st.round, st.step = r, PROPOSE
        h = st.height
        leader = tendermint_leader(h, r, self.n)
        if leader == i and self.active[i]:
            self._propose(i, h, r)
        if self.cfg.strategy == "equivocate" and (h, r) not in self._byz_rounds:
            # equivocators act once per (height, round), when the first node enters it
            self._byz_rounds.add((h, r))
            if not self.honest[leader]:
                self._propose(leader, h, r)
            self._byz_votes(PREVOTE, h, r)
            self._byz_votes(PRECOMMIT, h, r)
        self._set_timer(i, ("propose", h, r), self.timeout)
        self._progress(i)

    def _set_timer(self, i: int, key: tuple, after: int) -> None:
        st = self.state[i]
        if key in st.timers_set:
            return
        st.timers_set.add(key)
        self.engine.schedule(self.engine.now + after, EventKind.TIMER_FIRE, i, key)

    def _propose(self, i: int, h: int, r: int) -> None:
        st = self.state[i]
        if self.honest[i]:
            value = st.locked or self.value_for(h)
            self.net.broadcast(i, self.proposal_bits, ("proposal", h, r, value, i))
            self._record(i, ("proposal", h, r, value, i))
        elif self.cfg.strategy == "equivocate":
            others = [j for j in range(self.n) if j != i]
            half = len(others) // 2
            self.net.broadcast(i, self.proposal_bits, ("proposal", h, r, f"{self.value_for(h)}/A{r}", i),
                               receivers=others[:half])
            self.net.broadcast(i, self.proposal_bits, ("proposal", h, r, f"{self.value_for(h)}/B{r}", i),
                               receivers=others[half:])
        elif self.cfg.strategy == "delay-max":
            value = st.locked or self.value_for(h)
            self.net.broadcast(i, self.proposal_bits, ("proposal", h, r, value, i))
            self._record(i, ("proposal", h, r, value, i))
        # silent leaders send nothing

    def _vote(self, i: int, kind: str, h: int, r: int, value) -> None:
        msg = (kind, h, r, value, i)
        if self.active[i]:
            self.net.broadcast(i, self.vote_bits, msg)
            self._record(i, msg)

    def _byz_votes(self, kind: str, h: int, r: int) -> None:
        # equivocating validators send conflicting votes to the two halves of the network
        for b in self.corruption.byzantine:
            others = [j for j in range(self.n) if j != b]
            half = len(others) // 2
            self.net.broadcast(b, self.vote_bits, (kind, h, r, f"{self.value_for(h)}/A{r}", b), receivers=others[:half])
            self.net.broadcast(b, self.vote_bits, (kind, h, r, f"{self.value_for(h)}/B{r}", b), receivers=others[half:])

    # -- message handling --------------------------------------------
    def _record(self, i: int, msg) -> bool:
        kind, h, r, value, sender = msg
        st = self.state[i]
        if kind == "proposal":
            if tendermint_leader(h, r, self.n) != sender or (h, r) in st.proposals:
                return False
            st.proposals[(h, r)] = value
            return True
        key = (kind, h, r)
        votes = st.votes[key]
        if sender in votes:  # first vote per (sender, step) counts
            return False
        votes[sender] = value
        tally = st.tally[key]
        tally[value] += 1
        if kind == PRECOMMIT and value is not NIL and quorum(tally[value], self.n):
            st.ready.setdefault(h, (r, value))
        return True

    def on_message(self, node: int, msg: NetMessage) -> None:
        if not self.active[node]:
            return
        kind, h = msg.payload[0], msg.payload[1]
        st = self.state[node]
        if kind == "cert":
            # signed precommits are evidence on their own, independent of which
            # of an equivocator's votes this node happened to count first
            _, h, r, value, voters = msg.payload
            if quorum(len(set(voters)), self.n):
                st.ready.setdefault(h, (r, value))
            self._progress(node)
            return
        if h < st.height and msg.sender != node:
            self._send_certificate(node, msg.sender, h)
            return
        if self._record(node, msg.payload):
            self._progress(node)

    def _send_certificate(self, i: int, j: int, h: int) -> None:
        # catch-up: a node that already committed height h hands its precommit
        # quorum to a peer still voting at that height
        st = self.state[i]
        if (j, h) in st.timers_set or h not in st.ready:
            return
        st.timers_set.add((j, h))
        r, value = st.ready[h]
        voters = [s for s, v in st.votes[(PRECOMMIT, h, r)].items() if v == value]
        self.net.send(i, j, len(voters) * self.vote_bits, ("cert", h, r, value, tuple(voters)))

    def on_timer(self, node: int, key) -> None:
        if not self.active[node]:
            return
        kind, h, r = key
        st = self.state[node]
        if st.height != h or st.round != r:
            return
        if kind == "propose" and st.step == PROPOSE:
            st.step = PREVOTE
            self._vote(node, PREVOTE, h, r, NIL)
        elif kind == "prevote" and st.step == PREVOTE:
            st.step = PRECOMMIT
            self._vote(node, PRECOMMIT, h, r, NIL)
        elif kind == "precommit":
            self._start_round(node, r + 1)
            return
        self._progress(node)

    def _progress(self, i: int) -> None:
        n = self.n
        st = self.state[i]
        if not self.active[i] or st.height >= self.cfg.heights:
            return
        h = st.height
        if h in st.ready:
            # commit on a precommit quorum from any round of this height
            rr, v = st.ready[h]
            self._commit(i, h, rr, v)
            return
        r = st.round
        if st.step == PROPOSE:
            value = st.proposals.get((h, r))
            if value is not None:
                st.step = PREVOTE
                ok = st.locked is None or st.locked == value
                self._vote(i, PREVOTE, h, r, value if ok else NIL)
        if st.step == PREVOTE:
            key = (PREVOTE, h, r)
            for v, c in st.tally[key].items():
                if quorum(c, n):
                    st.step = PRECOMMIT
                    if v is not NIL:
                        st.locked = v
                    self._vote(i, PRECOMMIT, h, r, v)
                    break
            else:
                if quorum(len(st.votes[key]), n):
                    self._set_timer(i, ("prevote", h, r), self.timeout)
        if st.step == PRECOMMIT and st.round == r and st.height == h:
            key = (PRECOMMIT, h, r)
            if h in st.ready:
                rr, v = st.ready[h]
                self._commit(i, h, rr, v)
            elif quorum(st.tally[key][NIL], n):
                self._start_round(i, r + 1)
            elif quorum(len(st.votes[key]), n):
                self._set_timer(i, ("precommit", h, r), self.timeout)

    def _commit(self, i: int, h: int, r: int, value: str) -> None:
        if not self.honest[i]:
            self.state[i].height = h + 1
            self._start_height(i, h + 1)
            return
        self._done_count += 1
        others = {v for v in self.commits[h].values()}
        if others and value not in others:
            raise SafetyViolation(f"conflicting commits at height {h}: {others} vs {value}")
        self.commits[h][i] = value
        self.rounds_used[h] = max(self.rounds_used.get(h, 0), r + 1)
        self.book.deliver(i, value.split("/")[0], self.cfg.b)
        self._start_height(i, h + 1)

    def run(self) -> RunResult:
        cfg = self.cfg
        for i in range(self.n):
            self.engine.schedule(0, EventKind.PROTOCOL_TICK, i)
        self.engine.on(EventKind.PROTOCOL_TICK, self._boot)
        target = cfg.heights
        honest = [i for i in range(self.n) if self.honest[i]]

        def finished(_eng) -> bool:
            return self._done_count >= len(honest) * target

        stop = cfg.max_time
        if stop is not None:
            self.engine.run_until(lambda e: finished(e) or (e.peek_time() or 0) > stop)
        else:
            self.engine.run_until(finished)
        commits = {h: dict(v) for h, v in self.commits.items()}
        extras = dict(commits=commits, rounds=dict(self.rounds_used), height_start=dict(self.height_start))
        trace = finalize(self.engine, cfg, self.ledger, self.corruption)
        return RunResult("tendermint", cfg, trace, self.ledger, self.corruption, extras)

    def _boot(self, node: int, _payload) -> None:
        self._start_height(node, 0)


def run_tendermint(cfg: RunConfig) -> RunResult:
    return TendermintRun(cfg).run()
