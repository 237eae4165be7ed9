"""Acceptance suite: one test per acceptance criterion, each reporting PASS or FAIL.

Sweeps use SEEDS seeds per axis point. Set TOBENCH_WORKERS to run them in parallel.
"""

from __future__ import annotations

import functools
import json
import math
from collections import defaultdict
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
from scipy import stats

from conftest import CRITERIA
from oracles import naive_common_prefix, naive_growth, naive_quality, random_history
from tobench.config import RunConfig
from tobench.experiments.fit import fit_scaling
from tobench.experiments.presets import build_presets
from tobench.experiments.report import build_report
from tobench.experiments.sweep import ExperimentSpec, run_sweep
from tobench.metrics import (ChainHistory, backbone_report, check_chain_growth, check_chain_quality,
                             check_common_prefix, check_to_properties, latency_samples)
from tobench.protocols import run_protocol
from tobench.protocols.algorand import SortitionParams, proposer_prob, sortition_all
from tobench.protocols.hbbft import ba_run
from tobench.sim import RngStream

SEEDS = 20


@contextmanager
def criterion(num: int, text: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException:
        CRITERIA[num] = ("FAIL", f"{text} {_fmt(detail)}")
        print(f"criterion {num}: FAIL")
        raise
    CRITERIA[num] = ("PASS", f"{text} {_fmt(detail)}")
    print(f"criterion {num}: PASS")


def _fmt(d: dict) -> str:
    return " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())


@functools.lru_cache(maxsize=None)
def preset_rows(name: str) -> tuple:
    rows = run_sweep(build_presets(SEEDS)[name])
    assert all(r["status"] == "ok" for r in rows), [r["reason"] for r in rows if r["status"] != "ok"]
    return tuple(rows)


def slope(name: str, axis: str, metric: str, semilog: bool = False):
    return fit_scaling(preset_rows(name), axis, metric, semilog=semilog)


def test_criterion_01_tendermint_fault_free():
    with criterion(1, "tendermint fault-free: latency 3 delta, comm slope 2") as d:
        rows = preset_rows("tendermint-n-sweep")
        assert {r["latency"] for r in rows} == {3.0}
        assert run_protocol(RunConfig(protocol="tendermint", n=16, delta=4, b=8)).metrics["latency_max"] == 12
        d["comm_slope"] = slope("tendermint-n-sweep", "n", "comm").slope
        assert abs(d["comm_slope"] - 2.0) <= 0.15


def test_criterion_02_tendermint_worst_case():
    with criterion(2, "tendermint worst case: floor(alpha n)+1 rounds, latency slope 1, comm slope 3") as d:
        alpha = Fraction(3, 10)
        for n in build_presets(1)["tendermint-worst-n-sweep"].axes[0][1]:
            res = run_protocol(RunConfig(protocol="tendermint", n=n, alpha=alpha, corruption="worst", b=8))
            assert res.extras["rounds"][0] == math.floor(alpha * n) + 1
        d["latency_slope"] = slope("tendermint-worst-n-sweep", "n", "latency").slope
        d["comm_slope"] = slope("tendermint-worst-n-sweep", "n", "comm").slope
        assert abs(d["latency_slope"] - 1) <= 0.15
        assert abs(d["comm_slope"] - 3) <= 0.2


def test_criterion_03_hbbft_latency_and_batch_overhead():
    with criterion(3, "hbbft: semilog latency fit, flat per-node overhead with n^2 log n kappa batches") as d:
        d["semilog_r2"] = slope("hbbft-n-sweep", "n", "latency", semilog=True).r2
        assert d["semilog_r2"] >= 0.9
        per_node = defaultdict(list)
        for r in preset_rows("hbbft-batch-n-sweep"):
            per_node[r["value"]].append(r["comm"] / r["value"])
        means = np.array([np.mean(v) for _, v in sorted(per_node.items())])
        d["spread"] = float(np.max(np.abs(means / means.mean() - 1)))
        assert d["spread"] <= 0.2


def test_criterion_04_binary_agreement_and_common_subset():
    with criterion(4, "BA mean rounds 2 over 10^4 runs; ACS output at least (1-alpha)n") as d:
        props = np.random.default_rng(0).integers(0, 2, (10_000, 4))
        d["ba_rounds"] = float(ba_run(props, RngStream(1), n=4).rounds.mean())
        assert abs(d["ba_rounds"] - 2.0) <= 0.1
        smallest = math.inf
        for n, alpha in ((4, Fraction(1, 4)), (10, Fraction(3, 10)), (16, Fraction(5, 16))):
            for strategy in ("silent", "equivocate", "delay-max"):
                for seed in range(SEEDS):
                    res = run_protocol(RunConfig(protocol="hbbft", n=n, alpha=alpha, kappa=16, b=64,
                                                 strategy=strategy, seed=seed))
                    size = res.extras["epochs"][0]["size"]
                    assert size >= (1 - alpha) * n
                    smallest = min(smallest, size / n)
        d["min_output_fraction"] = smallest


def test_criterion_05_chain_scaling():
    with criterion(5, "chain protocols: comm slope 1, latency flat in n, linear in kappa") as d:
        for p in ("nakamoto", "ouroboros", "snowwhite"):
            c = slope(f"{p}-n-sweep", "n", "comm").slope
            lat = slope(f"{p}-n-sweep", "n", "latency").slope
            d[f"{p}_comm"], d[f"{p}_lat_n"] = c, lat
            assert abs(c - 1) <= 0.15
            assert abs(lat) <= 0.1
        for p in ("nakamoto", "ouroboros"):
            d[f"{p}_lat_kappa"] = k = slope(f"{p}-kappa-sweep", "kappa", "latency").slope
            assert abs(k - 1) <= 0.15


def test_criterion_06_orphan_ratio():
    with criterion(6, "nakamoto orphan ratio stable when run length doubles; ouroboros has none") as d:
        means = []
        for horizon in (1000, 2000):
            means.append(np.mean([run_protocol(RunConfig(protocol="nakamoto", n=32, kappa=16, b=64, max_time=horizon,
                                                         tx_count=3, seed=s)).extras["orphan_ratio"]
                                  for s in range(SEEDS)]))
        d["orphan_T"], d["orphan_2T"] = float(means[0]), float(means[1])
        assert abs(means[1] - means[0]) <= 0.05
        for s in range(SEEDS):
            res = run_protocol(RunConfig(protocol="ouroboros", n=32, kappa=16, b=64, max_time=1000, tx_count=3, seed=s))
            assert res.extras["orphan_ratio"] == 0.0


def test_criterion_07_ouroboros_growth():
    with criterion(7, "ouroboros chain growth at least (1-alpha)-0.05") as d:
        taus = [run_protocol(RunConfig(protocol="ouroboros", n=32, alpha=Fraction(1, 5), kappa=16, b=64,
                                       backbone=True, max_time=1000, kg=900, tx_count=3, seed=s)).metrics["tau"]
                for s in range(SEEDS)]
        d["min_tau"] = float(min(taus))
        assert min(taus) >= 0.8 - 0.05


def test_criterion_08_algorand():
    with criterion(8, "algorand: latency flat, comm slope 1, committee tail below the Chernoff bound") as d:
        d["lat_slope"] = slope("algorand-n-sweep", "n", "latency").slope
        d["comm_slope"] = slope("algorand-n-sweep", "n", "comm").slope
        assert abs(d["lat_slope"]) <= 0.05
        assert abs(d["comm_slope"] - 1) <= 0.15
        n = 1000
        sp = SortitionParams(n, 16, 200, proposer_prob(16, n))
        byz = np.zeros(n, dtype=bool)
        byz[:200] = True
        rng = RngStream(11)
        over = 0
        for _ in range(10_000):
            c = sortition_all("committee", sp, rng)
            over += (c & byz).sum() / max(1, c.sum()) > 0.3
        d["tail"] = over / 10_000
        d["bound"] = math.exp(-2 * 0.1**2 * 200)
        assert d["tail"] <= d["bound"]


def test_criterion_09_spectre():
    with criterion(9, "spectre: latency affine in log(1/eps)/((1-alpha)p); junk overhead 1/(1-alpha)") as d:
        groups = defaultdict(list)
        for r in preset_rows("spectre-rate-sweep"):
            groups[(r["point"]["epsilon"], r["point"]["spectre_rate"])].append(r["latency"])
        x = [math.log2(1 / e) / (0.8 * p) for e, p in sorted(groups)]
        y = [np.mean(groups[k]) for k in sorted(groups)]
        fit = stats.linregress(x, y)
        d["fit_r2"] = float(fit.rvalue**2)
        assert d["fit_r2"] >= 0.95 and fit.slope > 0
        for alpha in ("1/10", "1/5", "3/10"):
            comm = {}
            for strategy in ("silent", "junk"):
                spec = ExperimentSpec("j", "spectre", [("n", [32, 64])], seeds=SEEDS,
                                      base=dict(spectre_rate=0.5, alpha=alpha, strategy=strategy))
                comm[strategy] = [r["comm"] for r in run_sweep(spec)]
            ratio = float(np.mean(np.array(comm["junk"]) / np.array(comm["silent"])))
            target = 1 / (1 - float(Fraction(alpha)))
            d[f"junk_{alpha}"] = ratio
            assert abs(ratio / target - 1) <= 0.1


def test_criterion_10_backbone_checkers_and_liveness():
    with criterion(10, "CP/CG/CQ match brute force on 10^3 traces; liveness bound always respected") as d:
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            parents, honest, times, tips = random_history(rng)
            hist = ChainHistory(parents, honest, times, tips)
            assert check_common_prefix(hist) == naive_common_prefix(parents, tips)
            kg = int(rng.integers(1, 6))
            if times[-1] - times[0] >= kg:
                assert check_chain_growth(hist, kg) == naive_growth(parents, times, tips, kg)
            flags = [honest[b] for b in hist.chain(tips[-1][0])]
            kq = int(rng.integers(1, 9))
            if len(flags) >= kq:
                assert abs(check_chain_quality(flags, kq) - naive_quality(flags, kq)) < 1e-12
        passing = samples = 0
        worst = 0.0
        for protocol in ("nakamoto", "ouroboros", "snowwhite"):
            for strategy in ("silent", "mimic", "private_fork", "withhold"):
                for seed in range(SEEDS):
                    res = run_protocol(RunConfig(protocol=protocol, n=16, alpha=Fraction(1, 5), kappa=8, b=64,
                                                 backbone=True, strategy=strategy, tx_count=5, max_time=800,
                                                 seed=seed))
                    rep = backbone_report(res)
                    if not rep.passed:
                        continue
                    passing += 1
                    for s in latency_samples(res.trace):
                        samples += 1
                        assert s.delivered
                        rounds = s.latency / res.extras["round_len"]
                        assert rounds <= rep.u
                        worst = max(worst, rounds / rep.u)
        d["passing_runs"], d["samples"], d["max_latency_over_u"] = passing, samples, worst
        assert passing >= 0.75 * 3 * 4 * SEEDS


TO_CASES = {
    "nakamoto": ("silent", "mimic", "private_fork", "withhold"),
    "ouroboros": ("silent", "mimic", "private_fork", "withhold"),
    "snowwhite": ("silent", "mimic", "private_fork", "withhold"),
    "tendermint": ("silent", "equivocate", "delay-max"),
    "hbbft": ("silent", "equivocate", "delay-max"),
    "algorand": ("silent", "equivocate"),
    "spectre": ("silent", "junk", "withhold"),
}


def _to_config(protocol: str, strategy: str, seed: int) -> RunConfig:
    alpha = {"nakamoto": "1/5", "ouroboros": "1/5", "snowwhite": "1/5", "spectre": "1/5"}.get(protocol, "3/13")
    extra = dict(tendermint=dict(heights=2, delay_policy="random"), hbbft=dict(epochs=2),
                 algorand=dict(heights=2), spectre=dict(conflicts=1, epsilon=2.0**-6)).get(protocol, {})
    return RunConfig(protocol=protocol, n=13, alpha=alpha, kappa=8, b=64, strategy=strategy, seed=seed,
                     tx_count=5, **extra)


def test_criterion_11_to_properties():
    with criterion(11, "TO-broadcast properties hold in every run of every protocol and strategy") as d:
        runs = 0
        for protocol, strategies in TO_CASES.items():
            for strategy in strategies:
                for seed in range(SEEDS):
                    props = check_to_properties(run_protocol(_to_config(protocol, strategy, seed)).trace)
                    assert props["passed"], (protocol, strategy, seed, props)
                    runs += 1
        d["runs"] = runs


def test_criterion_12_permissionless_classifier():
    with criterion(12, "classifier: chain protocols, spectre, algorand suited; tendermint, hbbft not") as d:
        names = ["nakamoto-n-sweep", "ouroboros-n-sweep", "snowwhite-n-sweep", "tendermint-n-sweep",
                 "tendermint-worst-n-sweep", "hbbft-n-sweep", "algorand-n-sweep", "spectre-n-sweep"]
        rows = [r for name in names for r in preset_rows(name)]
        verdicts = {v.protocol: v.verdict for v in build_report(rows).verdicts}
        d.update(verdicts)
        expected = dict.fromkeys(("nakamoto", "ouroboros", "snowwhite", "spectre", "algorand"), "suited")
        expected.update(tendermint="not-suited", hbbft="not-suited")
        assert verdicts == expected


def test_criterion_13_determinism(tmp_path):
    with criterion(13, "identical configuration and seed give byte-identical output") as d:
        from tobench.cli import main

        for protocol in TO_CASES:
            cfg = _to_config(protocol, TO_CASES[protocol][1], 7).replace(record_network=True)
            assert run_protocol(cfg).trace.dumps() == run_protocol(cfg).trace.dumps()
        spec = ExperimentSpec("d", "algorand", [("n", [16, 32])], seeds=3, base=dict(kappa=8, b=64))
        assert json.dumps(run_sweep(spec)) == json.dumps(run_sweep(spec, workers=2))
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text("protocol: snowwhite\nn: 12\nalpha: 1/6\nkappa: 8\nbackbone: true\nseed: 3\n")
        outs = []
        for k in ("a", "b"):
            main(["run", str(cfg_path), "--out", str(tmp_path / k)])
            outs.append(((tmp_path / k / "trace.tsv").read_bytes(), (tmp_path / k / "metrics.json").read_bytes()))
        assert outs[0] == outs[1]
        d["protocols"] = len(TO_CASES)
