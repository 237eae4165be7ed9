"""Command line: run, sweep, check, report, claims."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigurationError

log = logging.getLogger("tobench")


def _cmd_run(args) -> int:
    from .metrics import check_to_properties
    from .protocols import run_protocol

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    result = run_protocol(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.write(out / "trace.tsv")
    (out / "metrics.json").write_text(json.dumps(result.metrics, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    props = check_to_properties(result.trace)
    print(json.dumps(dict(metrics=result.metrics, to_properties=props), sort_keys=True))
    return 0 if props["passed"] else 1


def _load_spec(args):
    from .experiments.presets import build_presets
    from .experiments.sweep import ExperimentSpec

    if args.preset:
        presets = build_presets(args.seeds or 20)
        if args.preset not in presets:
            raise ConfigurationError(f"unknown preset {args.preset!r}; available: {', '.join(sorted(presets))}")
        spec = presets[args.preset]
    elif args.config:
        spec = ExperimentSpec.load(args.config)
        if args.seeds:
            spec.seeds = args.seeds
    else:
        raise ConfigurationError("sweep needs a config file or --preset")
    if args.master_seed is not None:
        spec.master_seed = args.master_seed
    return spec


def _cmd_sweep(args) -> int:
    from .experiments.emit import write_csv, write_json
    from .experiments.sweep import run_sweep

    spec = _load_spec(args)
    rows = run_sweep(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = args.formats.split(",")
    for fmt in formats:
        if fmt == "csv":
            write_csv(rows, out / f"{spec.name}.csv")
        elif fmt == "json":
            write_json(rows, out / f"{spec.name}.json")
        else:
            raise ConfigurationError(f"sweep writes csv or json, got {fmt!r}")
    skipped = [r for r in rows if r["status"] != "ok"]
    for r in skipped:
        log.warning("%s %s=%s seed %s %s: %s", r["protocol"], r["axis"], r["value"], r["seed"], r["status"],
                    r["reason"])
    print(f"{spec.name}\t{len(rows)} rows\t{len(skipped)} skipped or failed\t{out}")
    return 0


def _cmd_check(args) -> int:
    from .metrics import backbone_check, check_to_properties, comm_complexity, default_windows, history_from_trace
    from .metrics import latency_samples
    from .sim import Trace

    trace = Trace.read(args.trace)
    props = check_to_properties(trace)
    lat = [s.latency for s in latency_samples(trace) if s.delivered]
    out = dict(to_properties=props, latency_max=max(lat) if lat else None,
               comm_amortized=comm_complexity(trace).amortized)
    ok = props["passed"]
    if "snap_tips" in trace.meta:
        m = trace.meta
        k = int(m["k"])
        kg, kq = default_windows(m["expected_interval"], m["round_len"], k, args.kg, args.kq)
        rep = backbone_check(history_from_trace(trace), k, kg, kq)
        out["backbone"] = dict(kp_min=rep.kp_min, tau=rep.tau, mu=rep.mu, kg=rep.kg, kq=rep.kq, kp=rep.kp,
                               u=None if rep.u == float("inf") else rep.u, passed=rep.passed)
        ok = ok and rep.passed
    print(json.dumps(out, sort_keys=True, indent=1))
    return 0 if ok else 1


def _cmd_report(args) -> int:
    from .experiments.emit import read_csv, read_json
    from .experiments.report import build_report, write_report

    rows = []
    for path in args.results:
        rows += read_json(path) if str(path).endswith(".json") else read_csv(path)
    rep = build_report(rows, args.tolerance)
    sys.stdout.write(rep.render())
    if args.out:
        write_report(rep, args.out, figures=not args.no_figures)
    return 0


def _cmd_claims(args) -> int:
    from .experiments.claims import CLAIMS

    cols = ["protocol", "metric", "expression", "subscript", "bound", "terms", "normalizer", "experiments", "note"]
    print("\t".join(cols))
    for c in CLAIMS:
        d = c.as_dict()
        d["terms"] = " + ".join(d["terms"])
        d["experiments"] = ",".join(d["experiments"])
        print("\t".join(str(d[k]) for k in cols))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tobench", description="Total-order broadcast protocol benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="single run: trace and metrics")
    r.add_argument("config")
    r.add_argument("--out", default="run-out")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run an experiment sweep (workers from TOBENCH_WORKERS)")
    s.add_argument("config", nargs="?")
    s.add_argument("--preset")
    s.add_argument("--seeds", type=int)
    s.add_argument("--master-seed", type=int)
    s.add_argument("--out", default="sweep-out")
    s.add_argument("--formats", default="csv,json")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("check", help="TO-broadcast and backbone checks on a trace file")
    c.add_argument("trace")
    c.add_argument("--kg", type=int)
    c.add_argument("--kq", type=int)
    c.set_defaults(func=_cmd_check)

    rp = sub.add_parser("report", help="fits, claim validation, verdicts and figures")
    rp.add_argument("results", nargs="+")
    rp.add_argument("--out")
    rp.add_argument("--tolerance", type=float)
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(func=_cmd_report)

    cl = sub.add_parser("claims", help="print the registered complexity claims")
    cl.set_defaults(func=_cmd_claims)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
