"""Metrics over traces: latency, amortized communication, backbone properties, TO checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError
from .sim import EventKind, Trace


# -- latency -------------------------------------------------------------------

@dataclass(frozen=True)
class LatencySample:
    msg_id: str
    broadcast_time: int
    last_delivery: int | None

    @property
    def delivered(self) -> bool:
        return self.last_delivery is not None

    @property
    def latency(self) -> int | None:
        return None if self.last_delivery is None else self.last_delivery - self.broadcast_time

    @property
    def status(self) -> str:
        return "delivered" if self.delivered else "undelivered"


def _deliveries(trace: Trace) -> dict[str, dict[int, int]]:
    honest = set(trace.honest_nodes())
    out: dict[str, dict[int, int]] = {}
    for r in trace.of_kind(EventKind.DELIVERY):
        if r.node in honest:
            out.setdefault(r.msg_id, {}).setdefault(r.node, r.time)
    return out


def _broadcasts(trace: Trace) -> dict[str, tuple[int, int, int]]:
    out: dict[str, tuple[int, int, int]] = {}
    for r in trace.of_kind(EventKind.BROADCAST):
        out.setdefault(r.msg_id, (r.time, r.node, r.size_bits))
    return out


def latency_samples(trace: Trace) -> list[LatencySample]:
    n_honest = len(trace.honest_nodes())
    dels = _deliveries(trace)
    out = []
    for mid, (t, _node, _bits) in _broadcasts(trace).items():
        got = dels.get(mid, {})
        last = max(got.values()) if len(got) >= n_honest and n_honest > 0 else None
        out.append(LatencySample(mid, t, last))
    return out


def latency_of(trace: Trace, msg_id: str) -> LatencySample:
    for s in latency_samples(trace):
        if s.msg_id == msg_id:
            return s
    raise KeyError(f"no broadcast of {msg_id!r} in trace")


# -- communication ---------------------------------------------------------------

@dataclass(frozen=True)
class CommSample:
    window: tuple[int, int] | None
    total_honest_bits: int
    delivered: int
    unit: str = "bits"

    @property
    def amortized(self) -> float | None:
        return None if self.delivered == 0 else self.total_honest_bits / self.delivered


def replay_honest_bits(trace: Trace, window: tuple[int, int] | None = None) -> int:
    """Sum of MessageDelivery sizes at honest receivers (requires network recording)."""
    honest = set(trace.honest_nodes())
    total = 0
    seen = False
    for r in trace.of_kind(EventKind.MESSAGE_DELIVERY):
        seen = True
        if r.node in honest and (window is None or window[0] <= r.time <= window[1]):
            total += r.size_bits
    if not seen and trace.meta.get("honest_bits"):
        raise ConfigurationError("trace has no MessageDelivery records; rerun with record_network")
    return total


def comm_complexity(trace: Trace, window: tuple[int, int] | None = None, unit: str = "bits") -> CommSample:
    """Honest-received bits per payload bit (or per message) delivered to every honest node."""
    if unit not in ("bits", "messages"):
        raise ConfigurationError("unit must be bits or messages")
    has_replay = any(r.kind is EventKind.MESSAGE_DELIVERY for r in trace.records)
    if has_replay:
        total = replay_honest_bits(trace, window)
    elif window is None:
        total = int(trace.meta.get("honest_bits", 0))
    else:
        raise ConfigurationError("a time window needs a trace recorded with record_network")
    delivered = 0
    bc = _broadcasts(trace)
    for s in latency_samples(trace):
        if not s.delivered:
            continue
        if window is not None and not (window[0] <= s.last_delivery <= window[1]):
            continue
        delivered += 1 if unit == "messages" else bc[s.msg_id][2]
    return CommSample(window, total, delivered, unit)


# -- backbone properties -----------------------------------------------------------

@dataclass
class ChainHistory:
    """Block tree (parents, honest flags) and per-node tip snapshots over time.

    ``tips[s][j]`` is the tip of node ``j`` at snapshot ``s`` taken at ``times[s]``
    (time in rounds). Block 0 is genesis and never counts towards lengths.
    """

    parents: Sequence[int]
    honest: Sequence[bool]
    times: Sequence[int]
    tips: Sequence[Sequence[int]]
    heights: list[int] = field(init=False)

    def __post_init__(self):
        h = [0] * len(self.parents)
        for b in range(1, len(self.parents)):
            p = self.parents[b]
            if not 0 <= p < b:
                raise ConfigurationError("parents must point to earlier blocks")
            h[b] = h[p] + 1
        self.heights = h

    def chain(self, tip: int) -> list[int]:
        out = []
        while tip != 0:
            out.append(tip)
            tip = self.parents[tip]
        return out[::-1]

    def lca(self, a: int, b: int) -> int:
        h, par = self.heights, self.parents
        while h[a] > h[b]:
            a = par[a]
        while h[b] > h[a]:
            b = par[b]
        while a != b:
            a, b = par[a], par[b]
        return a


def check_common_prefix(hist: ChainHistory) -> int:
    """Smallest k such that every snapshot pruned by k is a prefix of every later one.

    For a tip T first seen at snapshot s, the worst later chain is the one
    branching off T's path lowest, i.e. at the common ancestor of T and of all
    tips seen at snapshots >= s; so a suffix scan of LCAs suffices.
    """
    if len(hist.times) == 0:
        raise ConfigurationError("need at least one snapshot")
    first: dict[int, int] = {}
    for s, row in enumerate(hist.tips):
        for t in row:
            first.setdefault(int(t), s)
    suffix = [0] * len(hist.tips)
    acc = None
    for s in range(len(hist.tips) - 1, -1, -1):
        for t in hist.tips[s]:
            acc = int(t) if acc is None else hist.lca(acc, int(t))
        suffix[s] = acc
    kp = 0
    for t, s in first.items():
        kp = max(kp, hist.heights[t] - hist.heights[hist.lca(t, suffix[s])])
    return kp


def check_chain_growth(hist: ChainHistory, kg: int) -> float:
    """Minimum over kg-round windows and nodes of (blocks added) / kg."""
    if kg <= 0:
        raise ConfigurationError("kg must be positive")
    times = np.asarray(hist.times, dtype=np.int64)
    if len(times) == 0 or times[-1] - times[0] < kg:
        raise ConfigurationError(f"history spans fewer than kg={kg} rounds")
    lengths = np.asarray([[hist.heights[int(t)] for t in row] for row in hist.tips], dtype=np.int64)
    # lengths at the latest snapshot taken no later than each window end
    idx_end = np.searchsorted(times, times + kg, side="right") - 1
    valid = times + kg <= times[-1]
    growth = lengths[idx_end[valid]] - lengths[valid]
    return float(max(0, growth.min())) / kg


def check_chain_quality(honest_flags: Sequence[bool], kq: int) -> float:
    """Minimum over kq-length segments of the fraction of honest blocks."""
    if kq <= 0:
        raise ConfigurationError("kq must be positive")
    h = np.asarray(honest_flags, dtype=np.int64)
    if len(h) < kq:
        raise ConfigurationError(f"chain shorter than kq={kq}")
    c = np.concatenate(([0], np.cumsum(h)))
    return float((c[kq:] - c[:-kq]).min()) / kq


def chain_quality_history(hist: ChainHistory, kq: int) -> float:
    """Chain quality of the final chain of every node (minimum)."""
    return min(check_chain_quality([hist.honest[b] for b in hist.chain(int(t))], kq) for t in hist.tips[-1])


def liveness_bound(kg: int, kp: int, kq: int, tau: float) -> float:
    """Rounds until a broadcast payload is committed: max(kg, (kq+kp)/tau), rounded up."""
    if tau <= 0:
        return math.inf
    return float(max(kg, math.ceil((kq + kp) / tau - 1e-9)))


@dataclass
class BackboneReport:
    kp_min: int
    tau: float
    mu: float
    kg: int
    kq: int
    kp: int
    u: float
    cp_ok: bool
    cg_ok: bool
    cq_ok: bool

    @property
    def passed(self) -> bool:
        return self.cp_ok and self.cg_ok and self.cq_ok


def history_of(result) -> ChainHistory:
    tree = result.extras["tree"]
    round_len = result.extras["round_len"]
    parents = [max(0, b.parent) for b in tree.blocks]
    honest = [b.honest for b in tree.blocks]
    times = [t // round_len for t in result.extras["snap_times"]]
    tips = [list(map(int, row)) for row in result.extras["snap_tips"]]
    return ChainHistory(parents, honest, times, tips)


def history_from_trace(trace: Trace) -> ChainHistory:
    """Chain history stored in the metadata of a chain run recorded with ``backbone``."""
    meta = trace.meta
    if "snap_tips" not in meta:
        raise ConfigurationError("trace has no chain snapshots; rerun a chain protocol with backbone: true")
    round_len = int(meta.get("round_len", 1))
    return ChainHistory(meta["chain_parents"], meta["chain_honest"],
                        [t // round_len for t in meta["snap_times"]], meta["snap_tips"])


def default_windows(expected_interval: float, round_len: int, k: int,
                    kg: int | None = None, kq: int | None = None) -> tuple[int, int]:
    """Growth window of about 8 expected block intervals; quality window of k blocks."""
    kg = kg if kg is not None else max(1, math.ceil(8 * expected_interval / round_len))
    kq = kq if kq is not None else max(1, k)
    return kg, kq


def backbone_check(hist: ChainHistory, k: int, kg: int, kq: int) -> BackboneReport:
    kp_min = check_common_prefix(hist)
    tau = check_chain_growth(hist, kg)
    final_len = min(hist.heights[int(t)] for t in hist.tips[-1])
    mu = chain_quality_history(hist, kq) if final_len >= kq else 0.0
    u = liveness_bound(kg, k, kq, tau)
    return BackboneReport(kp_min, tau, mu, kg, kq, k, u, kp_min <= k, tau > 0, kq * mu >= 1)


def backbone_report(result) -> BackboneReport:
    hist = history_of(result)
    cfg = result.config
    k = int(result.extras["k"])
    kg, kq = default_windows(result.extras["expected_interval"], result.extras["round_len"], k, cfg.kg, cfg.kq)
    return backbone_check(hist, k, kg, kq)


# -- TO-broadcast properties -------------------------------------------------------

def _sequences(trace: Trace) -> dict[int, list[str]]:
    seqs: dict[int, list[str]] = {i: [] for i in trace.honest_nodes()}
    for r in trace.of_kind(EventKind.DELIVERY):
        if r.node in seqs:
            seqs[r.node].append(r.msg_id)
    return seqs


def _orders_consistent(a: list[str], b: list[str]) -> bool:
    pos = {m: i for i, m in enumerate(b)}
    last = -1
    for m in a:
        p = pos.get(m)
        if p is None:
            continue
        if p < last:
            return False
        last = p
    return True


def _dag_order(seqs: dict[int, list[str]], precedes) -> bool:
    # every node that delivered both ends of an ordered pair delivered them in that order
    for s in seqs.values():
        pos = {m: i for i, m in enumerate(s)}
        for a, b in precedes:
            if a in pos and b in pos and pos[a] > pos[b]:
                return False
    return True


def check_to_properties(trace: Trace) -> dict[str, Any]:
    """Validity, agreement, integrity and total (or partial) order of honest deliveries."""
    honest = set(trace.honest_nodes())
    bc = _broadcasts(trace)
    seqs = _sequences(trace)
    conflicts = [tuple(c) for c in trace.meta.get("conflicts", ())]
    conflicting = {m for c in conflicts for m in c}
    delivered_any = set().union(*seqs.values()) if seqs else set()

    integrity = all(len(s) == len(set(s)) and set(s) <= set(bc) for s in seqs.values())
    honest_sent = [m for m, (_t, node, _b) in bc.items() if node in honest]
    validity_classic = all(m in delivered_any for m in honest_sent)
    validity = all(m in delivered_any for m in honest_sent if m not in conflicting)
    sets = {frozenset(s) for s in seqs.values()}
    agreement = len(sets) <= 1

    distinct = list({tuple(s): s for s in seqs.values()}.values())
    order = all(_orders_consistent(distinct[i], distinct[j])
                for i in range(len(distinct)) for j in range(i + 1, len(distinct)))
    conflict_free = all(not (a in delivered_any and b in delivered_any) for a, b in conflicts)
    kind = trace.meta.get("order", "total")
    withheld = any(m not in delivered_any for m in conflicting & set(bc))
    out = dict(integrity=integrity, agreement=agreement, order_kind=kind,
               total_order=order and validity_classic and conflict_free and not withheld,
               partial_order=_dag_order(seqs, trace.meta["precedes"]) and conflict_free
               if "precedes" in trace.meta else order and conflict_free)
    if kind == "partial":
        out["validity"] = validity
        out["weakened"] = withheld or not validity_classic
        out["order"] = out["partial_order"]
    else:
        out["validity"] = validity_classic
        out["weakened"] = False
        out["order"] = out["total_order"]
    out["passed"] = bool(out["validity"] and out["agreement"] and out["integrity"] and out["order"])
    return out


# -- per-run record -----------------------------------------------------------------

METRIC_KEYS = ("latency_mean", "latency_max", "comm_amortized", "kp", "tau", "mu", "u",
               "orphan_ratio", "liveness_failures")


def metrics_record(result) -> dict[str, Any]:
    """One JSON-ready metrics object per run (keys in METRIC_KEYS, None when undefined)."""
    trace = result.trace
    samples = latency_samples(trace)
    lats = [s.latency for s in samples if s.delivered]
    comm = comm_complexity(trace)
    rec: dict[str, Any] = dict.fromkeys(METRIC_KEYS)
    rec["latency_mean"] = float(np.mean(lats)) if lats else None
    rec["latency_max"] = int(max(lats)) if lats else None
    rec["comm_amortized"] = comm.amortized
    conflicts = {m for c in trace.meta.get("conflicts", ()) for m in c}
    rec["liveness_failures"] = sum(1 for s in samples if not s.delivered and s.msg_id not in conflicts)
    if "orphan_ratio" in result.extras:
        rec["orphan_ratio"] = float(result.extras["orphan_ratio"])
    if result.extras.get("snap_times"):
        try:
            rep = backbone_report(result)
        except ConfigurationError:
            rep = None
        if rep is not None:
            rec.update(kp=rep.kp_min, tau=rep.tau, mu=rep.mu,
                       u=None if math.isinf(rep.u) else rep.u)
    return rec
