"""Log-log (and semilog) scaling fits over sweep rows."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np
from scipy import stats

from ..errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalingFit:
    axis: str
    metric: str
    x: tuple[float, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    counts: tuple[int, ...]
    slope: float
    intercept: float
    ci: tuple[float, float]
    r2: float
    semilog: bool = False

    def as_dict(self) -> dict[str, Any]:
        return dict(axis=self.axis, metric=self.metric, slope=self.slope, intercept=self.intercept,
                    ci_low=self.ci[0], ci_high=self.ci[1], r2=self.r2, semilog=self.semilog,
                    points=len(self.x))


def aggregate(rows: Iterable[dict[str, Any]], axis: str, metric: str) -> dict[float, list[float]]:
    """Metric samples grouped by axis value (ok rows only, non-positive values dropped)."""
    groups: dict[float, list[float]] = defaultdict(list)
    dropped = 0
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        point = r.get("point") or {r["axis"]: r["value"]}
        if axis not in point:
            continue
        v = r.get(metric)
        if v is None or not math.isfinite(float(v)) or float(v) <= 0:
            dropped += 1
            continue
        groups[float(point[axis])].append(float(v))
    if dropped:
        log.warning("fit %s/%s: dropped %d non-positive or missing samples", axis, metric, dropped)
    return groups


def fit_points(x, y, *, semilog: bool = False, axis: str = "x", metric: str = "y",
               std=None, counts=None) -> ScalingFit:
    """OLS of log y on log x (or of y on log x when ``semilog``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(np.unique(x)) < 2:
        raise ConfigurationError("need at least two distinct axis values")
    if np.any(x <= 0) or (not semilog and np.any(y <= 0)):
        raise ConfigurationError("log fit needs positive values")
    lx = np.log(x)
    ly = y if semilog else np.log(y)
    if np.ptp(ly) == 0:
        slope, intercept, r2, se = 0.0, float(ly[0]), 1.0, 0.0
    else:
        res = stats.linregress(lx, ly)
        slope, intercept, r2, se = float(res.slope), float(res.intercept), float(res.rvalue**2), float(res.stderr)
    dof = len(x) - 2
    half = float(stats.t.ppf(0.975, dof)) * se if dof > 0 else math.inf
    std = tuple(np.zeros(len(x))) if std is None else tuple(map(float, std))
    counts = tuple([1] * len(x)) if counts is None else tuple(map(int, counts))
    return ScalingFit(axis, metric, tuple(map(float, x)), tuple(map(float, y)), std, counts,
                      slope, intercept, (slope - half, slope + half), r2, semilog)


def fit_scaling(rows: Iterable[dict[str, Any]], axis: str, metric: str = "latency", *,
                semilog: bool = False, min_points: int = 4, min_seeds: int = 1) -> ScalingFit:
    """Fit the seed-mean of ``metric`` against ``axis``; order of rows is irrelevant."""
    groups = aggregate(rows, axis, metric)
    xs = sorted(v for v, s in groups.items() if len(s) >= min_seeds)
    if len(xs) < min_points:
        raise ConfigurationError(f"fit {axis}/{metric} needs >= {min_points} axis values, got {len(xs)}")
    # sort samples so the mean does not depend on row order
    means = [math.fsum(sorted(groups[v])) / len(groups[v]) for v in xs]
    stds = [float(np.std(sorted(groups[v]))) for v in xs]
    counts = [len(groups[v]) for v in xs]
    return fit_points(xs, means, semilog=semilog, axis=axis, metric=metric, std=stds, counts=counts)
