"""Result emission: fixed-column CSV, JSON, and per-figure plot data (TSV)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable

from .fit import ScalingFit

CSV_COLUMNS = ("protocol", "axis", "value", "seed", "latency", "comm", "kp", "tau", "mu", "u", "orphan_ratio")
FORMATS = ("csv", "json", "plotdata")


def _cell(v: Any) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_csv(rows: Iterable[dict[str, Any]], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            if r.get("status", "ok") != "ok":
                continue
            w.writerow([_cell(r.get(c)) for c in CSV_COLUMNS])
    return path


def read_csv(path: str | Path) -> list[dict[str, Any]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row: dict[str, Any] = {}
            for k, v in rec.items():
                if k in ("protocol", "axis"):
                    row[k] = v
                elif v == "":
                    row[k] = None
                else:
                    try:
                        row[k] = int(v)
                    except ValueError:
                        try:
                            row[k] = float(v)
                        except ValueError:
                            row[k] = v
            row["status"] = "ok"
            out.append(row)
    return out


def write_json(rows: list[dict[str, Any]], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(path: str | Path) -> list[dict[str, Any]]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_plotdata(fits: Iterable[tuple[str, ScalingFit]], path: str | Path) -> list[Path]:
    """One TSV per figure: axis value, seed-mean, stddev, seed count, fitted value."""
    base = Path(path)
    base.mkdir(parents=True, exist_ok=True)
    out = []
    for label, fit in fits:
        p = base / f"{label}.tsv"
        lines = [f"# {fit.metric} vs {fit.axis}\tslope={fit.slope:.6g}\tr2={fit.r2:.6g}\tsemilog={fit.semilog}",
                 "\t".join((fit.axis, "mean", "std", "seeds", "fitted"))]
        for x, m, s, c in zip(fit.x, fit.mean, fit.std, fit.counts):
            fx = fit.intercept + fit.slope * math.log(x)
            fitted = fx if fit.semilog else math.exp(fx)
            lines.append(f"{x:g}\t{m:.6g}\t{s:.6g}\t{c}\t{fitted:.6g}")
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        out.append(p)
    return out


def emit(rows: list[dict[str, Any]], fmt: str, path: str | Path, fits=None) -> list[Path]:
    if fmt == "csv":
        return [write_csv(rows, path)]
    if fmt == "json":
        return [write_json(rows, path)]
    if fmt == "plotdata":
        return write_plotdata(fits or [], path)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
