"""Matplotlib figures for scaling fits (rendered to files, never shown)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .fit import ScalingFit  # noqa: E402


def plot_fit(fit: ScalingFit, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.errorbar(fit.x, fit.mean, yerr=fit.std, fmt="o", ms=4, capsize=2, label="seed mean")
    xs = [fit.x[0] * (fit.x[-1] / fit.x[0]) ** (i / 40) for i in range(41)]
    ys = [fit.intercept + fit.slope * math.log(x) for x in xs]
    if not fit.semilog:
        ys = [math.exp(y) for y in ys]
        ax.set_yscale("log")
    ax.plot(xs, ys, "-", lw=1, label=f"slope {fit.slope:.2f} (r2 {fit.r2:.2f})")
    ax.set_xscale("log")
    ax.set_xlabel(fit.axis)
    ax.set_ylabel(fit.metric)
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
