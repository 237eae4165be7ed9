"""Spectre: DAG construction, confirmation rule, mining rate, double spends."""

from __future__ import annotations

from fractions import Fraction

import pytest

from tobench.config import RunConfig
from tobench.errors import ConfigurationError
from tobench.metrics import check_to_properties
from tobench.protocols import run_protocol
from tobench.protocols.spectre import BlockDag, SpectreRun, confirmations_needed, spectre_confirm, spectre_step


def test_single_producer_builds_a_chain():
    dag = BlockDag()
    views = {0: {0}}
    for t in range(1, 6):
        (blk,) = spectre_step(dag, [0], views, t, lambda i: True)
        views[0].add(blk.id)
    assert [b.refs for b in dag.blocks[1:]] == [(0,), (1,), (2,), (3,), (4,)]


def test_block_references_all_known_tips():
    dag = BlockDag()
    views = {0: {0}, 1: {0}, 2: {0}}
    a, b = spectre_step(dag, [0, 1], views, 1, lambda i: True)
    views[2] |= {a.id, b.id}
    (c,) = spectre_step(dag, [2], views, 2, lambda i: True)
    assert c.refs == (a.id, b.id)
    assert dag.is_ancestor(a.id, c.id) and dag.is_ancestor(0, c.id) and not dag.is_ancestor(a.id, b.id)


def test_dag_rejects_bad_refs():
    dag = BlockDag()
    with pytest.raises(ConfigurationError):
        dag.add([], 0, 1, True)
    with pytest.raises(ConfigurationError):
        dag.add([5], 0, 1, True)


def test_confirmations_needed():
    assert confirmations_needed(1.0) == 0
    assert confirmations_needed(2.0**-20) == 20
    assert confirmations_needed(2.0**-20, c=2) == 40
    with pytest.raises(ConfigurationError):
        confirmations_needed(0)


def _chain(length: int) -> BlockDag:
    dag = BlockDag()
    for i in range(length):
        dag.add([i], 0, i + 1, True)
    return dag


def test_confirm_epsilon_one_needs_only_delta():
    dag = _chain(1)
    assert spectre_confirm(dag, 1, None, 1.0, elapsed_since=None, delta=3) == "pending"
    assert spectre_confirm(dag, 1, None, 1.0, elapsed_since=2, delta=3) == "pending"
    assert spectre_confirm(dag, 1, None, 1.0, elapsed_since=3, delta=3) == "accepted"


def test_confirm_needs_twenty_blocks_for_small_epsilon():
    eps = 2.0**-20
    assert spectre_confirm(_chain(20), 1, None, eps, elapsed_since=5, delta=1) == "pending"
    assert spectre_confirm(_chain(21), 1, None, eps, elapsed_since=0, delta=1) == "pending"
    assert spectre_confirm(_chain(21), 1, None, eps, elapsed_since=1, delta=1) == "accepted"
    assert spectre_confirm(_chain(21), 1, None, eps, elapsed_since=1, delta=1, conflicting=True) == "pending"


def test_honest_block_rate():
    res = run_protocol(RunConfig(protocol="spectre", n=10, alpha=Fraction(1, 5), spectre_rate=0.5,
                                 max_time=4000, tx_count=0))
    honest = sum(b.honest for b in res.extras["dag"].blocks[1:])
    assert abs(honest / 4000 - 0.8 * 0.5) <= 0.05 * 0.4


def test_epsilon_one_latency_two_delta():
    # one delay to learn the block, one more before accepting
    res = run_protocol(RunConfig(protocol="spectre", n=10, kappa=8, b=64, epsilon=1.0, delta=3))
    assert res.metrics["latency_max"] == 6


def test_double_spend_is_withheld_and_weakens_classic_order():
    res = run_protocol(RunConfig(protocol="spectre", n=10, kappa=8, b=64, conflicts=1, epsilon=2.0**-4))
    props = check_to_properties(res.trace)
    assert props["passed"] and props["partial_order"]
    assert props["weakened"] and not props["total_order"]
    delivered = {r.msg_id for r in res.trace if r.kind.value == "Delivery"}
    assert not {"ds0a", "ds0b"} & delivered


@pytest.mark.parametrize("strategy", ["silent", "junk", "withhold"])
def test_properties_under_attack(strategy):
    for seed in range(3):
        res = run_protocol(RunConfig(protocol="spectre", n=10, alpha=Fraction(1, 5), kappa=8, b=64,
                                     epsilon=2.0**-6, strategy=strategy, seed=seed, conflicts=1))
        assert check_to_properties(res.trace)["passed"]


def test_unknown_strategy_rejected():
    with pytest.raises(ConfigurationError):
        SpectreRun(RunConfig(protocol="spectre", strategy="selfish"))
