"""Command line entry points."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from tobench.cli import main
from tobench.sim import Trace

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_run_writes_trace_and_metrics(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "tendermint.yaml"), "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["to_properties"]["passed"]
    assert out["metrics"]["latency_max"] == 2 * (3 + 6 * 3)
    assert Trace.read(tmp_path / "trace.tsv").meta["protocol"] == "tendermint"
    assert json.loads((tmp_path / "metrics.json").read_text()) == out["metrics"]


def test_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        main(["run", str(CONFIGS / "tendermint.yaml"), "--out", str(tmp_path / d)])
    assert (tmp_path / "a" / "trace.tsv").read_bytes() == (tmp_path / "b" / "trace.tsv").read_bytes()


def test_check_backbone_trace(tmp_path, capsys):
    main(["run", str(CONFIGS / "nakamoto-backbone.yaml"), "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["check", str(tmp_path / "trace.tsv"), "--kg", "400"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["backbone"]["passed"] and out["backbone"]["kg"] == 400


def test_sweep_and_report(tmp_path, capsys):
    assert main(["sweep", str(CONFIGS / "sweep-hbbft.yaml"), "--seeds", "2", "--out", str(tmp_path)]) == 0
    csv_path = tmp_path / "hbbft-small.csv"
    assert len(csv_path.read_text().splitlines()) == 1 + 4 * 2
    capsys.readouterr()
    assert main(["report", str(tmp_path / "hbbft-small.json"), "--out", str(tmp_path / "rep"), "--no-figures"]) == 0
    text = capsys.readouterr().out
    assert "## fits" in text and "hbbft" in text
    assert (tmp_path / "rep" / "claims.tsv").exists()


def test_claims_listing(capsys):
    assert main(["claims"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 + 14


def test_configuration_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("protocol: tendermint\nn: 6\nalpha: 1/3\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--preset", "nope"]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
