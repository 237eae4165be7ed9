"""Report: per-experiment fits, claim validation, permissionless verdicts, figures."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..config import RunConfig
from ..errors import ConfigurationError
from .claims import ClaimCheck, get_claim, validate_claim
from .classify import PermissionlessVerdict, classify_permissionless
from .fit import ScalingFit, fit_scaling

log = logging.getLogger(__name__)

METRICS = ("latency", "comm")


@dataclass
class Report:
    fits: dict[str, ScalingFit] = field(default_factory=dict)  # label -> fit
    claims: list[ClaimCheck] = field(default_factory=list)
    verdicts: list[PermissionlessVerdict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def fit_rows(self) -> list[dict[str, Any]]:
        return [dict(label=k, **f.as_dict()) for k, f in self.fits.items()]

    def tables(self) -> dict[str, tuple[list[str], list[dict[str, Any]]]]:
        return {
            "fits": (["label", "axis", "metric", "slope", "ci_low", "ci_high", "r2", "semilog", "points"],
                     self.fit_rows()),
            "claims": (["protocol", "metric", "expression", "axis", "expected", "measured", "tolerance",
                        "status", "detail"], [c.row() for c in self.claims]),
            "verdicts": (["protocol", "comm_slope_n", "latency_slope_n", "comm_tol", "latency_tol", "verdict"],
                         [v.row() for v in self.verdicts]),
        }

    def render(self) -> str:
        out = []
        for name, (cols, rows) in self.tables().items():
            out.append(f"## {name}")
            out.append("\t".join(cols))
            for r in rows:
                out.append("\t".join(_fmt(r.get(c)) for c in cols))
            out.append("")
        for n in self.notes:
            out.append(f"# note: {n}")
        return "\n".join(out).rstrip() + "\n"


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _group(rows: list[dict[str, Any]]) -> dict[tuple[str, str, str], list[dict[str, Any]]]:
    groups: dict[tuple[str, str, str], list[dict[str, Any]]] = defaultdict(list)
    for r in rows:
        exp = r.get("experiment") or f"{r['protocol']}-{r['axis']}-sweep"
        groups[(exp, r["protocol"], r["axis"])].append(r)
    return groups


def _midpoint(rows: list[dict[str, Any]], axis: str) -> dict[str, float]:
    ok = [r for r in rows if r.get("status", "ok") == "ok"]
    base = dict(ok[0].get("params") or {}) if ok else {}
    if not base:
        cfg = RunConfig(protocol=rows[0]["protocol"])
        base = dict(n=cfg.n, kappa=cfg.kappa, b=cfg.b, delta=cfg.delta, p=1.0)
    values = sorted({float((r.get("point") or {axis: r["value"]})[axis]) for r in ok})
    key = {"spectre_rate": "p"}.get(axis, axis)
    if values and key in base:
        base[key] = math.sqrt(values[0] * values[-1])
    return base


def build_report(rows: list[dict[str, Any]], tolerance: float | None = None) -> Report:
    rep = Report()
    by_protocol_n: dict[str, dict[str, dict[str, ScalingFit]]] = defaultdict(dict)
    for (exp, protocol, axis), grp in sorted(_group(rows).items()):
        if "," in axis:
            rep.notes.append(f"{exp}: two-axis sweep, no single-axis fit")
            continue
        fits: dict[str, ScalingFit] = {}
        for metric in METRICS:
            try:
                fits[metric] = fit_scaling(grp, axis, metric)
            except ConfigurationError as exc:
                rep.notes.append(f"{exp}/{metric}: {exc}")
                continue
            rep.fits[f"{exp}.{metric}"] = fits[metric]
        point = _midpoint(grp, axis)
        for metric, fit in list(fits.items()):
            try:
                claim = get_claim(protocol, metric)
            except KeyError:
                continue
            if grp[0].get("experiment") and exp not in claim.experiments:
                continue
            rep.claims.append(validate_claim(fit, claim, point, tolerance))
            if claim.semilog and axis == "n":
                try:
                    sl = fit_scaling(grp, axis, metric, semilog=True)
                except ConfigurationError as exc:
                    rep.notes.append(f"{exp}/{metric} semilog: {exc}")
                    continue
                rep.fits[f"{exp}.{metric}.semilog"] = sl
                rep.claims.append(validate_claim(sl, claim, point))
        if axis == "n" and len(fits) == 2:
            by_protocol_n[protocol][exp] = fits
    for protocol, exps in sorted(by_protocol_n.items()):
        preferred = get_claim(protocol, "latency").experiments
        exp = next((e for e in preferred if e in exps), sorted(exps)[0])
        f = exps[exp]
        rep.verdicts.append(classify_permissionless(protocol, f["comm"], f["latency"]))
    return rep


def write_report(rep: Report, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Delimited tables, per-figure plot data and (optionally) PNG figures under ``out_dir``."""
    from .emit import write_plotdata

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (cols, rows) in rep.tables().items():
        p = out / f"{name}.tsv"
        lines = ["\t".join(cols)] + ["\t".join(_fmt(r.get(c)) for c in cols) for r in rows]
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(p)
    written += write_plotdata(rep.fits.items(), out / "plotdata")
    if figures:
        from .plots import plot_fit

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        for label, fit in rep.fits.items():
            written.append(plot_fit(fit, fig_dir / f"{label}.png", title=label))
    return written
