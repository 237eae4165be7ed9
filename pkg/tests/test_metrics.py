"""Latency, communication, backbone checkers (against a brute-force oracle) and TO checks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tobench.config import RunConfig
from tobench.errors import ConfigurationError
from tobench.metrics import (ChainHistory, check_chain_growth, check_chain_quality, check_common_prefix,
                             check_to_properties, comm_complexity, latency_of, latency_samples,
                             liveness_bound, replay_honest_bits)
from tobench.protocols import run_protocol
from tobench.sim import EventKind, Trace, TraceRecord

from oracles import naive_common_prefix, naive_growth, naive_quality

B, D, M = EventKind.BROADCAST, EventKind.DELIVERY, EventKind.MESSAGE_DELIVERY


def _trace(rows, n=4, byz=(), **meta) -> Trace:
    recs = [TraceRecord(t, i, kind, node, size, mid) for i, (t, kind, node, size, mid) in enumerate(rows)]
    return Trace("x", recs, dict(n=n, byzantine=list(byz), **meta))


# -- latency ------------------------------------------------------------------

def test_latency_last_honest_delivery():
    tr = _trace([(5, B, 0, 8, "m")] + [(30 + i, D, i, 8, "m") for i in range(3)] + [(42, D, 3, 8, "m")])
    assert latency_of(tr, "m").latency == 37


def test_latency_same_step_is_zero():
    tr = _trace([(7, B, 0, 8, "m")] + [(7, D, i, 8, "m") for i in range(4)])
    assert latency_of(tr, "m").latency == 0


def test_latency_ignores_byzantine_receivers_and_flags_undelivered():
    tr = _trace([(0, B, 0, 8, "m"), (0, B, 0, 8, "z")] + [(2, D, i, 8, "m") for i in range(3)]
                + [(2, D, 0, 8, "z")], byz=[3])
    s = {x.msg_id: x for x in latency_samples(tr)}
    assert s["m"].latency == 2
    assert s["z"].status == "undelivered" and s["z"].latency is None
    with pytest.raises(KeyError):
        latency_of(tr, "q")


def test_tendermint_latency_metric():
    assert run_protocol(RunConfig(protocol="tendermint", n=4)).metrics["latency_max"] == 3


# -- communication --------------------------------------------------------------

def test_comm_one_message_to_three_honest():
    rows = [(0, B, 0, 1, "m")] + [(1, M, i, 1, "p") for i in (1, 2, 3)] + [(1, D, i, 1, "m") for i in range(4)]
    assert comm_complexity(_trace(rows)).amortized == 3


def test_comm_undefined_without_delivery():
    rows = [(0, B, 0, 1, "m")] + [(1, M, i, 50, "p") for i in (1, 2, 3)]
    c = comm_complexity(_trace(rows))
    assert c.total_honest_bits == 150 and c.amortized is None


def test_comm_window_and_units():
    rows = ([(0, B, 0, 10, "a")] + [(1, M, i, 5, "p") for i in (1, 2, 3)] + [(1, D, i, 10, "a") for i in range(4)]
            + [(5, B, 0, 10, "b")] + [(6, M, i, 7, "q") for i in (1, 2, 3)] + [(6, D, i, 10, "b") for i in range(4)])
    tr = _trace(rows)
    assert comm_complexity(tr, window=(0, 2)).amortized == 15 / 10
    assert comm_complexity(tr, unit="messages").amortized == (15 + 21) / 2
    with pytest.raises(ConfigurationError):
        comm_complexity(tr, unit="bytes")


def test_hbbft_replay_equals_ledger():
    res = run_protocol(RunConfig(protocol="hbbft", n=7, kappa=16, b=128, record_network=True))
    assert replay_honest_bits(res.trace) == res.ledger.total == res.trace.meta["honest_bits"]


# -- backbone: examples ---------------------------------------------------------------

def _line(length: int) -> list[int]:
    return [0] + list(range(length))


def test_cp_identical_chains():
    hist = ChainHistory(_line(6), [True] * 7, [0, 1], [[3, 3], [6, 6]])
    assert check_common_prefix(hist) == 0


def test_cp_divergence_in_last_two_blocks():
    # main line 1-2-3-4; the fork 5-6 branches off block 2
    parents = [0, 0, 1, 2, 3, 2, 5]
    hist = ChainHistory(parents, [True] * 7, [0], [[4, 6]])
    assert hist.heights[4] == hist.heights[6] == 4
    assert check_common_prefix(hist) == 2


def test_cg_examples():
    steady = ChainHistory(_line(30), [True] * 31, list(range(31)), [[t, t] for t in range(31)])
    assert check_chain_growth(steady, 10) == 1.0
    stuck = ChainHistory(_line(3), [True] * 4, list(range(20)), [[3]] * 20)
    assert check_chain_growth(stuck, 10) == 0.0
    with pytest.raises(ConfigurationError):
        check_chain_growth(steady, 40)


def test_cq_examples():
    assert check_chain_quality([True] * 10, 4) == 1.0
    assert check_chain_quality([True, False] * 5, 2) == 0.5
    with pytest.raises(ConfigurationError):
        check_chain_quality([True] * 3, 4)


def test_liveness_bound_examples():
    assert liveness_bound(10, 20, 20, 0.5) == 80
    assert liveness_bound(100, 1, 1, 1) == 100
    assert liveness_bound(10, 20, 20, 0) == math.inf


# -- backbone: brute-force oracle -----------------------------------------------------

@st.composite
def histories(draw, max_blocks=64):
    nb = draw(st.integers(2, max_blocks))
    parents = [0] + [draw(st.integers(max(0, b - 4), b - 1)) for b in range(1, nb)]
    honest = [True] + [draw(st.booleans()) for _ in range(1, nb)]
    nodes = draw(st.integers(1, 4))
    snaps = draw(st.integers(1, 12))
    tips = [[draw(st.integers(0, nb - 1)) for _ in range(nodes)] for _ in range(snaps)]
    return parents, honest, list(range(snaps)), tips


@settings(max_examples=300, deadline=None)
@given(histories())
def test_common_prefix_matches_brute_force(h):
    parents, honest, times, tips = h
    assert check_common_prefix(ChainHistory(parents, honest, times, tips)) == naive_common_prefix(parents, tips)


@settings(max_examples=300, deadline=None)
@given(histories(), st.integers(1, 6))
def test_chain_growth_matches_brute_force(h, kg):
    parents, honest, times, tips = h
    hist = ChainHistory(parents, honest, times, tips)
    if times[-1] - times[0] < kg:
        with pytest.raises(ConfigurationError):
            check_chain_growth(hist, kg)
        return
    assert check_chain_growth(hist, kg) == pytest.approx(naive_growth(parents, times, tips, kg))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=64), st.integers(1, 16))
def test_chain_quality_matches_brute_force(flags, kq):
    if len(flags) < kq:
        with pytest.raises(ConfigurationError):
            check_chain_quality(flags, kq)
        return
    assert check_chain_quality(flags, kq) == pytest.approx(naive_quality(flags, kq))


# -- TO properties ---------------------------------------------------------------------

def _two_msgs(order_b):
    rows = [(0, B, 0, 8, "a"), (0, B, 1, 8, "b")]
    rows += [(3, D, 0, 8, "a"), (4, D, 0, 8, "b")]
    rows += [(3, D, 1, 8, order_b[0]), (4, D, 1, 8, order_b[1])]
    return _trace(rows, n=2)


def test_total_order_passes_and_fails_on_swap():
    assert check_to_properties(_two_msgs("ab"))["passed"]
    props = check_to_properties(_two_msgs("ba"))
    assert not props["total_order"] and not props["passed"]


def test_agreement_and_integrity():
    rows = [(0, B, 0, 8, "a"), (3, D, 0, 8, "a")]
    assert not check_to_properties(_trace(rows, n=2))["agreement"]
    rows = [(0, B, 0, 8, "a"), (3, D, 0, 8, "a"), (4, D, 0, 8, "a"), (3, D, 1, 8, "a")]
    assert not check_to_properties(_trace(rows, n=2))["integrity"]
    rows = [(3, D, 0, 8, "ghost"), (3, D, 1, 8, "ghost")]
    assert not check_to_properties(_trace(rows, n=2))["integrity"]


def test_validity_only_counts_honest_senders():
    rows = [(0, B, 1, 8, "byz"), (0, B, 0, 8, "a"), (2, D, 0, 8, "a"), (2, D, 2, 8, "a")]
    assert check_to_properties(_trace(rows, n=3, byz=[1]))["validity"]


def test_double_spend_partial_order_passes_classic_weakened():
    rows = [(0, B, 0, 8, "tx0"), (1, B, 0, 8, "ds0a"), (1, B, 0, 8, "ds0b")]
    rows += [(5, D, i, 8, "tx0") for i in range(2)]
    tr = _trace(rows, n=2, order="partial", conflicts=[["ds0a", "ds0b"]], precedes=[])
    props = check_to_properties(tr)
    assert props["passed"] and props["partial_order"] and props["weakened"]
    assert not props["total_order"]


def test_partial_order_enforces_dag_precedence():
    rows = [(0, B, 0, 8, "a"), (0, B, 0, 8, "b"), (3, D, 0, 8, "a"), (3, D, 0, 8, "b"),
            (3, D, 1, 8, "b"), (3, D, 1, 8, "a")]
    assert check_to_properties(_trace(rows, n=2, order="partial", precedes=[]))["passed"]
    assert not check_to_properties(_trace(rows, n=2, order="partial", precedes=[["a", "b"]]))["passed"]


def test_both_conflicting_delivered_breaks_order():
    rows = [(0, B, 0, 8, "x"), (0, B, 0, 8, "y")] + [(2, D, i, 8, m) for i in range(2) for m in "xy"]
    props = check_to_properties(_trace(rows, n=2, order="partial", conflicts=[["x", "y"]], precedes=[]))
    assert not props["partial_order"]
