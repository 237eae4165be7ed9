"""Deterministic discrete-event engine.

Virtual time is an integer count of steps. Events are ordered by
``(time, seq)`` where ``seq`` is a global insertion counter, so equal-time
events replay in the order they were scheduled. Computation is instantaneous;
only scheduled events advance the clock.

Trace file format (tab separated, one record per line, fixed field order)::

    time  seq  kind  node  size_bits  msg_id

Lines starting with ``#`` are header metadata written as ``# key=value``.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple

import numpy as np

from .errors import ConfigurationError, RunawayRunError

DEFAULT_EVENT_CAP = 10**8

TRACE_FIELDS = ("time", "seq", "kind", "node", "size_bits", "msg_id")


class EventKind(str, enum.Enum):
    MESSAGE_DELIVERY = "MessageDelivery"
    TIMER_FIRE = "TimerFire"
    PROTOCOL_TICK = "ProtocolTick"
    BROADCAST = "Broadcast"
    DELIVERY = "Delivery"


class TraceRecord(NamedTuple):
    time: int
    seq: int
    kind: EventKind
    node: int
    size_bits: int
    msg_id: str


class Event:
    """A scheduled event. Doubles as the cancellation handle returned by ``schedule``."""

    __slots__ = ("time", "seq", "kind", "node", "payload", "size_bits", "msg_id", "cancelled")

    def __init__(self, time, seq, kind, node, payload=None, size_bits=0, msg_id=""):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.node = node
        self.payload = payload
        self.size_bits = size_bits
        self.msg_id = msg_id
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __repr__(self) -> str:
        return f"Event(t={self.time}, seq={self.seq}, {self.kind.value}, node={self.node})"


class _Batch:
    # Fan-out of one payload to several nodes at the same instant. Occupies a
    # contiguous block of seq numbers, so it replays exactly like len(nodes)
    # individually scheduled events.
    __slots__ = ("time", "seq", "kind", "nodes", "payload", "size_bits", "msg_id", "cancelled")

    def __init__(self, time, seq, kind, nodes, payload, size_bits, msg_id):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.nodes = nodes
        self.payload = payload
        self.size_bits = size_bits
        self.msg_id = msg_id
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass
class Trace:
    """Ordered event records plus run metadata."""

    config_digest: str = ""
    records: list[TraceRecord] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_kind(self, kind: EventKind) -> list[TraceRecord]:
        return [r for r in self.records if r.kind is kind]

    @property
    def byzantine(self) -> frozenset[int]:
        return frozenset(self.meta.get("byzantine", ()))

    @property
    def n(self) -> int:
        return int(self.meta.get("n", 0))

    def honest_nodes(self) -> list[int]:
        byz = self.byzantine
        return [i for i in range(self.n) if i not in byz]

    def dumps(self) -> str:
        lines = [f"# config_digest={self.config_digest}"]
        for key in sorted(self.meta):
            lines.append(f"# {key}={json.dumps(self.meta[key], sort_keys=True)}")
        lines.append("# " + "\t".join(TRACE_FIELDS))
        for r in self.records:
            lines.append(f"{r.time}\t{r.seq}\t{r.kind.value}\t{r.node}\t{r.size_bits}\t{r.msg_id}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Trace":
        trace = cls()
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    continue
                key, value = body.split("=", 1)
                if key == "config_digest":
                    trace.config_digest = value
                else:
                    trace.meta[key] = json.loads(value)
                continue
            t, s, kind, node, size, msg = line.split("\t")
            trace.records.append(TraceRecord(int(t), int(s), EventKind(kind), int(node), int(size), msg))
        return trace

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


Handler = Callable[[int, Any], None]

DEFAULT_RECORD = frozenset({EventKind.BROADCAST, EventKind.DELIVERY})
RECORD_ALL = frozenset(EventKind)


class Engine:
    """Single-threaded event loop.

    Handlers are registered per event kind with signature ``fn(node, payload)``;
    the current event's time and metadata are exposed as attributes while the
    handler runs.
    """

    def __init__(
        self,
        *,
        max_events: int = DEFAULT_EVENT_CAP,
        record: Iterable[EventKind] = DEFAULT_RECORD,
        config_digest: str = "",
    ):
        self.now = 0
        self.max_events = max_events
        self.processed = 0
        self.trace = Trace(config_digest=config_digest)
        self._record = frozenset(record)
        self._queue: list[tuple[int, int, Any]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Handler] = {}
        self.current_seq = -1
        self.current_size = 0
        self.current_msg_id = ""

    # -- registration -------------------------------------------------
    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def records(self, kind: EventKind) -> bool:
        return kind in self._record

    # -- scheduling ---------------------------------------------------
    def _check_time(self, time: int) -> None:
        if time < self.now:
            raise ConfigurationError(f"cannot schedule at t={time}, current time is {self.now}")

    def schedule(self, time: int, kind: EventKind, node: int, payload: Any = None,
                 *, size_bits: int = 0, msg_id: str = "") -> Event:
        self._check_time(time)
        ev = Event(time, self._seq, kind, node, payload, size_bits, msg_id)
        self._seq += 1
        heapq.heappush(self._queue, (time, ev.seq, ev))
        return ev

    def schedule_batch(self, time: int, kind: EventKind, nodes: list[int], payload: Any = None,
                       *, size_bits: int = 0, msg_id: str = "") -> _Batch | None:
        if not nodes:
            return None
        self._check_time(time)
        batch = _Batch(time, self._seq, kind, nodes, payload, size_bits, msg_id)
        self._seq += len(nodes)
        heapq.heappush(self._queue, (time, batch.seq, batch))
        return batch

    def emit(self, kind: EventKind, node: int, size_bits: int = 0, msg_id: str = "") -> None:
        """Record an instantaneous occurrence (e.g. a TO-delivery) at the current time."""
        seq = self._seq
        self._seq += 1
        if kind in self._record:
            self.trace.records.append(TraceRecord(self.now, seq, kind, node, size_bits, msg_id))

    def fire_now(self, ev: Event) -> None:
        """Process a pending event immediately at the current time (re-entrant)."""
        if ev.cancelled:
            return
        ev.cancel()
        clone = Event(self.now, self._seq, ev.kind, ev.node, ev.payload, ev.size_bits, ev.msg_id)
        self._seq += 1
        self._process(clone)

    @property
    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> int | None:
        while self._queue and self._queue[0][2].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    # -- execution ----------------------------------------------------
    def _process(self, ev: Event) -> None:
        self.processed += 1
        if self.processed > self.max_events:
            raise RunawayRunError(f"event cap {self.max_events} exceeded at t={self.now}", self.trace)
        self.now = ev.time
        self.current_seq = ev.seq
        self.current_size = ev.size_bits
        self.current_msg_id = ev.msg_id
        if ev.kind in self._record:
            self.trace.records.append(TraceRecord(ev.time, ev.seq, ev.kind, ev.node, ev.size_bits, ev.msg_id))
        handler = self._handlers.get(ev.kind)
        if handler is not None:
            handler(ev.node, ev.payload)

    def _process_batch(self, batch: _Batch) -> None:
        self.now = batch.time
        self.current_size = batch.size_bits
        self.current_msg_id = batch.msg_id
        handler = self._handlers.get(batch.kind)
        rec = batch.kind in self._record
        records = self.trace.records
        seq = batch.seq
        for node in batch.nodes:
            self.processed += 1
            if self.processed > self.max_events:
                raise RunawayRunError(f"event cap {self.max_events} exceeded at t={self.now}", self.trace)
            self.current_seq = seq
            if rec:
                records.append(TraceRecord(batch.time, seq, batch.kind, node, batch.size_bits, batch.msg_id))
            if handler is not None:
                handler(node, batch.payload)
            seq += 1

    def step(self) -> bool:
        """Process the next event (or batch). Returns False when the queue is empty."""
        queue = self._queue
        while queue:
            _, _, item = heapq.heappop(queue)
            if item.cancelled:
                continue
            if isinstance(item, _Batch):
                self._process_batch(item)
            else:
                self._process(item)
            return True
        return False

    def run_until(self, stop: int | str | Callable[["Engine"], bool] | None = "quiescence") -> Trace:
        """Run until quiescence, a time bound, or a predicate over the engine holds.

        With an integer bound every event at ``time <= stop`` is processed and
        the clock is left at ``stop`` (never past the next pending event).
        """
        if stop is None or stop == "quiescence":
            while self.step():
                pass
        elif isinstance(stop, int):
            while True:
                t = self.peek_time()
                if t is None or t > stop:
                    break
                self.step()
            self.now = max(self.now, stop)
        elif callable(stop):
            while not stop(self):
                if not self.step():
                    break
        else:
            raise ConfigurationError(f"unsupported stop condition {stop!r}")
        return self.trace


def _derive_key(seed: int, path: tuple[str, ...]) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed & 0xFFFFFFFFFFFFFFFF).encode())
    for label in path:
        h.update(b"\x1f")
        h.update(label.encode())
    return int.from_bytes(h.digest(), "big")


class RngStream:
    """Seeded random stream identified by ``(seed, label path)``.

    ``py`` is a :class:`random.Random` (fast scalar draws) and ``np`` a numpy
    Generator (vector draws); both derive from the same key.
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(path)
        self.key = _derive_key(self.seed, self.path)
        self.py = random.Random(self.key)
        self.np = np.random.default_rng(np.random.SeedSequence(self.key))
        self._labels: set[str] = set()

    def fork(self, label: str) -> "RngStream":
        label = str(label)
        if label in self._labels:
            raise ConfigurationError(f"rng label {label!r} already used under {'/'.join(self.path) or '<root>'}")
        self._labels.add(label)
        return RngStream(self.seed, self.path + (label,))

    def random(self) -> float:
        return self.py.random()

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={'/'.join(self.path)!r})"


def fork_rng(parent: RngStream, label: str) -> RngStream:
    return parent.fork(label)


def config_digest(config: dict[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
