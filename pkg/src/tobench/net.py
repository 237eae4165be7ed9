"""Model parameters, message transport, static corruption and bit accounting."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .sim import Engine, Event, EventKind, RngStream

HEADER_BITS = 64


def as_fraction(value: Any) -> Fraction:
    """Parse ``"1/5"``, ``"0.2"``, 0.2 or Fraction into an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class ModelParams:
    n: int
    delta: int = 1
    alpha: Fraction = Fraction(0)
    kappa: int = 64
    p: float | None = None
    b: int = 1024
    # optional coupling delta(b) = delta + ceil(delta_b_slope * b); 0 keeps delta constant
    delta_b_slope: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        if self.n < 2:
            raise ConfigurationError(f"n must be >= 2, got {self.n}")
        if self.delta < 1:
            raise ConfigurationError(f"delta must be a positive number of steps, got {self.delta}")
        if self.kappa < 1:
            raise ConfigurationError(f"kappa must be >= 1, got {self.kappa}")
        if not (0 <= self.alpha < 1):
            raise ConfigurationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.b < 1:
            raise ConfigurationError(f"b must be a positive bit count, got {self.b}")
        if self.p is not None and self.p <= 0:
            raise ConfigurationError(f"p must be positive, got {self.p}")

    @property
    def effective_delta(self) -> int:
        return self.delta + math.ceil(self.delta_b_slope * self.b)

    @property
    def byzantine_count(self) -> int:
        return math.floor(self.alpha * self.n)

    def check_admissible(self, threshold: Fraction, protocol: str = "") -> None:
        if self.alpha >= threshold:
            raise ConfigurationError(
                f"alpha={self.alpha} is not below the admissibility threshold {threshold}"
                + (f" of {protocol}" if protocol else "")
            )


@dataclass(frozen=True)
class StubSizes:
    """Bit sizes of stubbed cryptographic objects, all derived from kappa."""

    kappa: int

    @property
    def hash(self) -> int:
        return self.kappa

    @property
    def signature(self) -> int:
        return self.kappa

    @property
    def vrf_proof(self) -> int:
        return 2 * self.kappa

    @property
    def decryption_share(self) -> int:
        return self.kappa

    @property
    def vote(self) -> int:
        return self.hash + self.signature + HEADER_BITS


# -- synchrony ---------------------------------------------------------------

@dataclass(frozen=True)
class Synchronous:
    delta: int


@dataclass(frozen=True)
class PartiallySynchronous:
    gst: int
    delta: int


@dataclass(frozen=True)
class AsynchronousRounds:
    # one asynchronous round is `delta` steps
    delta: int = 1


SynchronyMode = Synchronous | PartiallySynchronous | AsynchronousRounds

DELAY_POLICIES = ("max", "min", "random")


def make_mode(name: str, delta: int, gst: int = 0) -> SynchronyMode:
    if name == "sync":
        return Synchronous(delta)
    if name == "partial":
        return PartiallySynchronous(gst, delta)
    if name == "async":
        return AsynchronousRounds(delta)
    raise ConfigurationError(f"unknown synchrony mode {name!r}")


def message_delay(mode: SynchronyMode, policy: str, now: int, rng: RngStream | None) -> int:
    """Delay in steps chosen by the adversary's delay policy, within the mode's contract."""
    if isinstance(mode, PartiallySynchronous) and now < mode.gst:
        bound = mode.gst - now + mode.delta
    else:
        bound = mode.delta
    if policy == "max":
        return bound
    if policy == "min":
        return 1
    if policy == "random":
        if rng is None:
            raise ConfigurationError("random delay policy needs an rng stream")
        return rng.py.randint(1, bound)
    raise ConfigurationError(f"unknown delay policy {policy!r}")


# -- corruption --------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionMap:
    byzantine: frozenset[int]
    weights: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.weights)

    def is_honest(self, node: int) -> bool:
        return node not in self.byzantine

    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.byzantine]

    @property
    def honest_mask(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        for i in self.byzantine:
            mask[i] = False
        return mask

    @property
    def byzantine_weight(self) -> float:
        return sum(self.weights[i] for i in self.byzantine) / sum(self.weights)


def corrupt_sample(
    params: ModelParams,
    strategy: str,
    rng: RngStream,
    threshold: Fraction = Fraction(1),
    *,
    weights: Sequence[float] | None = None,
    worst: Callable[[int], Iterable[int]] | None = None,
    protocol: str = "",
) -> CorruptionMap:
    """Pick the statically corrupted set.

    With equal weights exactly floor(alpha*n) nodes are corrupted. With
    unequal weights nodes are added (random order, or the ``worst`` hook's
    order) while the corrupted weight stays within alpha of the total.
    """
    params.check_admissible(threshold, protocol)
    n = params.n
    w = tuple(float(x) for x in (weights if weights is not None else [1.0] * n))
    if len(w) != n:
        raise ConfigurationError(f"{len(w)} weights for {n} nodes")
    equal = len(set(w)) == 1
    if strategy == "uniform":
        if equal:
            chosen = rng.py.sample(range(n), params.byzantine_count)
        else:
            order = list(range(n))
            rng.py.shuffle(order)
            chosen = _fill_by_weight(order, w, params.alpha)
    elif strategy == "worst":
        f = params.byzantine_count
        order = list(worst(f)) if worst is not None else list(range(n))
        chosen = order[:f] if equal else _fill_by_weight(order, w, params.alpha)
    else:
        raise ConfigurationError(f"unknown corruption strategy {strategy!r}")
    return CorruptionMap(frozenset(chosen), w)


def _fill_by_weight(order: list[int], weights: tuple[float, ...], alpha: Fraction) -> list[int]:
    budget = float(alpha) * sum(weights)
    chosen, used = [], 0.0
    for i in order:
        if used + weights[i] <= budget + 1e-12:
            chosen.append(i)
            used += weights[i]
    return chosen


# -- messages and accounting ------------------------------------------------

@dataclass(slots=True)
class NetMessage:
    sender: int
    receiver: int  # BROADCAST for fan-out copies; actual receiver passed to the callback
    size_bits: int
    msg_id: int
    payload: Any = None
    round_tag: int | None = None
    sent_at: int = 0
    sent_seq: int = 0


BROADCAST = -1


class BitLedger:
    """Exact count of bits received by honest nodes."""

    def __init__(self, n: int, honest: Sequence[bool] | np.ndarray):
        self.n = n
        self.honest = [bool(h) for h in honest]
        self.received = [0] * n
        self.per_message: dict[Any, int] = defaultdict(int)

    @property
    def total(self) -> int:
        return sum(self.received)

    def credit(self, receiver: int, size_bits: int, msg_id: Any) -> None:
        if self.honest[receiver]:
            self.received[receiver] += size_bits
            self.per_message[msg_id] += size_bits

    def credit_vector(self, bits: np.ndarray, msg_id: Any) -> None:
        """Credit ``bits[i]`` to every honest node ``i`` (vector of per-node totals)."""
        total = 0
        for i, h in enumerate(self.honest):
            if h and bits[i]:
                v = int(bits[i])
                self.received[i] += v
                total += v
        if total:
            self.per_message[msg_id] += total

    def per_honest_node(self) -> float:
        honest = sum(self.honest)
        return self.total / honest if honest else 0.0


class Network:
    """Point-to-point reliable channels on a complete graph.

    Each send schedules exactly one delivery. The ledger is credited when the
    delivery is processed, and only for honest receivers.
    """

    def __init__(
        self,
        engine: Engine,
        n: int,
        corruption: CorruptionMap | None = None,
        mode: SynchronyMode = Synchronous(1),
        policy: str = "max",
        rng: RngStream | None = None,
        ledger: BitLedger | None = None,
        sender_policy: dict[int, str] | None = None,
    ):
        if policy not in DELAY_POLICIES:
            raise ConfigurationError(f"unknown delay policy {policy!r}")
        self.engine = engine
        self.n = n
        self.corruption = corruption or CorruptionMap(frozenset(), tuple([1.0] * n))
        self.mode = mode
        self.policy = policy
        self.sender_policy = sender_policy or {}
        self.rng = rng
        self.ledger = ledger or BitLedger(n, [self.corruption.is_honest(i) for i in range(n)])
        self.on_message: Callable[[int, NetMessage], None] | None = None
        self._next_id = 0
        self._honest = self.ledger.honest
        self._pending_rounds: dict[int, dict[int, Event]] = defaultdict(dict)
        self.sent_log: list[tuple[int, int, int, int, int | None]] | None = None
        engine.on(EventKind.MESSAGE_DELIVERY, self._deliver)

    def _new_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def _delay(self, sender: int) -> int:
        policy = self.sender_policy.get(sender, self.policy)
        return message_delay(self.mode, policy, self.engine.now, self.rng)

    def _enforce_round_order(self, round_tag: int | None) -> None:
        # all round r-2 (and older) messages are delivered before a round r message is sent
        if round_tag is None or not isinstance(self.mode, AsynchronousRounds):
            return
        stale = sorted(r for r in self._pending_rounds if r <= round_tag - 2 and self._pending_rounds[r])
        for r in stale:
            for ev in sorted(self._pending_rounds[r].values(), key=lambda e: e.seq):
                self.engine.fire_now(ev)

    def send(self, sender: int, receiver: int, size_bits: int, payload: Any = None,
             round_tag: int | None = None) -> Event:
        if not (0 <= sender < self.n and 0 <= receiver < self.n):
            raise ConfigurationError(f"invalid node ids {sender}->{receiver}")
        self._enforce_round_order(round_tag)
        msg = NetMessage(sender, receiver, size_bits, self._new_id(), payload, round_tag,
                         self.engine.now, self.engine.current_seq)
        t = self.engine.now + self._delay(sender)
        ev = self.engine.schedule(t, EventKind.MESSAGE_DELIVERY, receiver, msg,
                                  size_bits=size_bits, msg_id=str(msg.msg_id))
        if round_tag is not None and isinstance(self.mode, AsynchronousRounds):
            self._pending_rounds[round_tag][msg.msg_id * self.n + receiver] = ev
        if self.sent_log is not None:
            self.sent_log.append((msg.msg_id, sender, receiver, size_bits, round_tag))
        return ev

    def broadcast(self, sender: int, size_bits: int, payload: Any = None,
                  round_tag: int | None = None, receivers: Iterable[int] | None = None) -> int:
        """Send one copy to every other node (or to ``receivers``). Returns the copy count."""
        targets = [r for r in (range(self.n) if receivers is None else receivers) if r != sender]
        if not targets:
            return 0
        policy = self.sender_policy.get(sender, self.policy)
        uniform = policy != "random" and not isinstance(self.mode, AsynchronousRounds)
        if not uniform:
            for r in targets:
                self.send(sender, r, size_bits, payload, round_tag)
            return len(targets)
        msg = NetMessage(sender, BROADCAST, size_bits, self._new_id(), payload, round_tag,
                         self.engine.now, self.engine.current_seq)
        t = self.engine.now + self._delay(sender)
        self.engine.schedule_batch(t, EventKind.MESSAGE_DELIVERY, targets, msg,
                                   size_bits=size_bits, msg_id=str(msg.msg_id))
        if self.sent_log is not None:
            for r in targets:
                self.sent_log.append((msg.msg_id, sender, r, size_bits, round_tag))
        return len(targets)

    def _deliver(self, node: int, msg: NetMessage) -> None:
        if self._honest[node]:
            self.ledger.received[node] += msg.size_bits
            self.ledger.per_message[msg.msg_id] += msg.size_bits
        if msg.round_tag is not None and isinstance(self.mode, AsynchronousRounds):
            self._pending_rounds[msg.round_tag].pop(msg.msg_id * self.n + node, None)
        if self.on_message is not None:
            self.on_message(node, msg)


class LockstepNet:
    """Accounting-only transport for round-synchronous protocols.

    Protocols that advance in lockstep (one tick per round) keep their own
    vectorised per-node message counters; this class charges the honest bit
    ledger at delivery time and, when network records are enabled, expands
    every charge into one MessageDelivery trace record per receiver.
    """

    def __init__(self, engine: Engine, corruption: CorruptionMap, ledger: BitLedger, round_len: int):
        self.engine = engine
        self.corruption = corruption
        self.ledger = ledger
        self.n = corruption.n
        self.round_len = round_len
        self.honest_mask = corruption.honest_mask
        self._honest_int = self.honest_mask.astype(np.int64)
        self._due: dict[int, list[tuple]] = defaultdict(list)
        self._next_id = 0
        self.record = engine.records(EventKind.MESSAGE_DELIVERY)

    def charge(self, deliver_round: int, senders: np.ndarray | Sequence[int], size_bits: int,
               receivers: np.ndarray | None = None, tag: str = "m") -> None:
        """Each sender sends one ``size_bits`` message to each receiver (never to itself)."""
        senders = np.asarray(senders, dtype=np.int64)
        if senders.size == 0 or size_bits <= 0:
            return
        self._next_id += 1
        self._due[deliver_round].append((senders, size_bits, receivers, f"{tag}#{self._next_id}"))

    def charge_counts(self, deliver_round: int, counts: np.ndarray, size_bits: int, tag: str = "m") -> None:
        """Node ``i`` sends ``counts[i]`` messages of ``size_bits`` to every other node."""
        counts = np.asarray(counts, dtype=np.int64)
        if size_bits <= 0 or not counts.any():
            return
        senders = np.repeat(np.arange(self.n), counts)
        self.charge(deliver_round, senders, size_bits, tag=tag)

    def flush(self, round_index: int) -> None:
        for senders, size, receivers, mid in self._due.pop(round_index, ()):
            k = senders.size
            own = np.bincount(senders, minlength=self.n)
            if receivers is None:
                per_node = (k - own) * size * self._honest_int
            else:
                per_node = (k - own) * size * self._honest_int * receivers.astype(np.int64)
            self.ledger.credit_vector(per_node, mid)
            if self.record:
                targets = range(self.n) if receivers is None else np.flatnonzero(receivers)
                for s in senders.tolist():
                    for r in targets:
                        r = int(r)
                        if r != s:
                            self.engine.emit(EventKind.MESSAGE_DELIVERY, r, size, f"{mid}:{s}")

    def pending_rounds(self) -> list[int]:
        return sorted(self._due)
