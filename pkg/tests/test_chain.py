"""Longest-chain protocols: block tree, leader schedules, sleepy nodes, commit rule."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from tobench.config import RunConfig
from tobench.errors import ConfigurationError
from tobench.metrics import check_to_properties
from tobench.net import ModelParams
from tobench.protocols import run_protocol
from tobench.protocols.chain import (BlockTree, ChainRun, LeaderSchedule, committed_prefix, orphan_ratio,
                                     sleepy_assign)
from tobench.sim import EventKind, RngStream


def _linear(length: int) -> BlockTree:
    tree = BlockTree()
    for i in range(length):
        tree.new_block(i, 0, i, 0, True)
    return tree


def _drive(run: ChainRun, until: int) -> None:
    for t in range(until + 1):
        run.engine.schedule(t, EventKind.PROTOCOL_TICK, -1)
        run.engine.run_until(t)


def _ticks(run: ChainRun, until: int) -> None:
    run.engine.on(EventKind.PROTOCOL_TICK, run.tick)
    _drive(run, until)


def test_ouroboros_honest_leader_extends_by_one():
    run = ChainRun(RunConfig(protocol="ouroboros", n=4, kappa=4))
    _ticks(run, 0)
    assert len(run.tree) == 2 and run.tree[1].height == 1


def test_nakamoto_no_leader_leaves_tree_unchanged():
    run = ChainRun(RunConfig(protocol="nakamoto", n=4, kappa=4))
    run.schedule.prob = 0.0
    _ticks(run, 20)
    assert len(run.tree) == 1


def test_simultaneous_leaders_orphan_one():
    run = ChainRun(RunConfig(protocol="nakamoto", n=4, kappa=4, delta=1))
    plan = {0: [0, 1], 2: [2]}
    run.schedule.elected = lambda r, rng: np.array(plan.get(r, []), dtype=int)
    _ticks(run, 3)
    assert len(run.tree) == 4
    assert run.tree[3].parent == 1  # ties broken towards the smaller block id
    assert orphan_ratio(run.tree) == pytest.approx(1 / 3)


def test_committed_prefix():
    assert len(committed_prefix(_linear(10), 3)) == 7
    assert committed_prefix(_linear(2), 5) == []
    assert committed_prefix(_linear(6), 0) == list(range(1, 7))
    with pytest.raises(ConfigurationError):
        committed_prefix(_linear(2), -1)


def test_orphan_ratio_examples():
    assert orphan_ratio(_linear(12)) == 0.0
    tree = _linear(8)
    tree.new_block(3, 1, 4, 0, True)
    tree.new_block(5, 2, 6, 0, True)
    assert len(tree.public_ids()) == 10
    assert orphan_ratio(tree) == pytest.approx(0.2)


def test_ouroboros_fault_free_has_no_orphans():
    res = run_protocol(RunConfig(protocol="ouroboros", n=8, kappa=8, max_time=1000))
    assert len(res.extras["tree"]) > 900
    assert res.extras["orphan_ratio"] == 0.0


def test_sleepy_all_awake():
    awake = sleepy_assign(ModelParams(n=10), 0, RngStream(0), 50)
    assert awake.all()


def test_sleepy_rejects_minority_awake():
    with pytest.raises(ConfigurationError):
        sleepy_assign(ModelParams(n=10, alpha=Fraction(3, 10)), Fraction(2, 5), RngStream(0), 5)


def test_sleepy_awake_honest_count():
    params = ModelParams(n=100, alpha=Fraction(1, 5))
    byz = frozenset(range(20))
    awake = sleepy_assign(params, Fraction(3, 10), RngStream(1), 2000, byz)
    honest_awake = awake[:, 20:].sum(axis=1)
    assert abs(honest_awake.mean() - 50) <= 3
    assert awake[:, :20].all()


def test_nakamoto_block_rate():
    n = 16
    sched = LeaderSchedule("nakamoto", n, np.full(n, 1 / n), 0.2)
    rng = RngStream(9)
    blocks = sum(len(sched.elected(r, rng)) for r in range(10_000))
    assert abs(blocks - 2000) <= 200


@pytest.mark.parametrize("protocol", ["nakamoto", "ouroboros", "snowwhite"])
@pytest.mark.parametrize("strategy", ["silent", "mimic", "private_fork", "withhold"])
def test_chain_runs_deliver_everything_safely(protocol, strategy):
    cfg = RunConfig(protocol=protocol, n=10, alpha=Fraction(1, 5), kappa=8, b=64, tx_count=5,
                    strategy=strategy, seed=3)
    res = run_protocol(cfg)
    assert res.extras["violations"] == []
    assert check_to_properties(res.trace)["passed"]


def test_unknown_strategy_rejected():
    with pytest.raises(ConfigurationError):
        ChainRun(RunConfig(protocol="nakamoto", strategy="equivocate"))


@pytest.mark.parametrize("strategy", ["private_fork", "withhold"])
def test_long_adversarial_runs_keep_common_prefix(strategy):
    for seed in range(3):
        res = run_protocol(RunConfig(protocol="nakamoto", n=32, alpha=Fraction(1, 5), kappa=16, b=64,
                                     strategy=strategy, max_time=2000, seed=seed))
        assert res.extras["violations"] == []
        assert len(res.extras["tree"]) > 300
