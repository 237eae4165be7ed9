"""Asymptotic latency and communication claims per protocol, and their validation against fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .fit import ScalingFit

DEFAULT_TOL = 0.15
ZERO_TOL = 0.1
CODOMINANCE_RATIO = 2.0
SEMILOG_R2 = 0.9

# sweep-axis names that map onto a claim parameter
AXIS_PARAM = {"n": "n", "kappa": "kappa", "delta": "delta", "b": "b", "p": "p", "spectre_rate": "p"}


@dataclass(frozen=True)
class Term:
    """Coefficient-free monomial, e.g. {'n': 3, 'log_n': 1, 'kappa': 1} for n^3 log(n) kappa."""

    powers: tuple[tuple[str, int], ...]

    @classmethod
    def of(cls, **powers: int) -> "Term":
        return cls(tuple(sorted(powers.items())))

    def value(self, point: dict[str, float]) -> float:
        v = 1.0
        for name, e in self.powers:
            if name.startswith("log_"):
                v *= math.log(point[name[4:]]) ** e
            else:
                v *= point[name] ** e
        return v

    def exponent(self, param: str, point: dict[str, float]) -> float:
        """Local log-log exponent d log(term) / d log(param) at ``point``."""
        d = dict(self.powers)
        e = float(d.get(param, 0))
        if d.get("log_" + param):
            e += d["log_" + param] / math.log(point[param])
        return e

    def __str__(self) -> str:
        parts = []
        for name, e in self.powers:
            label = f"log({name[4:]})" if name.startswith("log_") else name
            parts.append(label if e == 1 else f"{label}^{e}")
        return "*".join(parts) or "1"


@dataclass(frozen=True)
class ComplexityClaim:
    protocol: str
    metric: str  # latency | comm
    expression: str  # asymptotic expression, e.g. "b n Θ_α(1)"
    terms: tuple[Term, ...]
    subscript: str
    bound: str  # theta | O | omega | mixed
    # the comm metric is per delivered payload bit, so totals are divided by this term
    normalizer: Term = field(default_factory=Term.of)
    semilog: bool = False
    experiments: tuple[str, ...] = ()
    note: str = ""

    @property
    def key(self) -> str:
        return f"{self.protocol}/{self.metric}"

    def as_dict(self) -> dict[str, Any]:
        return dict(protocol=self.protocol, metric=self.metric, expression=self.expression,
                    terms=[str(t) for t in self.terms], subscript=self.subscript, bound=self.bound,
                    normalizer=str(self.normalizer), semilog=self.semilog,
                    experiments=list(self.experiments) or ["not desk-testable"], note=self.note)


_T = Term.of
_PER_B = _T(b=1)

CLAIMS: tuple[ComplexityClaim, ...] = (
    ComplexityClaim("nakamoto", "latency", "ΔΘ_{α,Δ/p}(κ)", (_T(delta=1, kappa=1),), "α, Δ/p", "theta",
                    experiments=("nakamoto-n-sweep", "nakamoto-kappa-sweep")),
    ComplexityClaim("nakamoto", "comm", "b n Θ_α(1)", (_T(b=1, n=1),), "α", "theta", _PER_B,
                    experiments=("nakamoto-n-sweep",)),
    ComplexityClaim("ouroboros", "latency", "ΔΩ_α(κ)", (_T(delta=1, kappa=1),), "α", "omega",
                    experiments=("ouroboros-n-sweep", "ouroboros-kappa-sweep")),
    ComplexityClaim("ouroboros", "comm", "b n Θ_α(1)", (_T(b=1, n=1),), "α", "theta", _PER_B,
                    experiments=("ouroboros-n-sweep",)),
    ComplexityClaim("snowwhite", "latency", "Δ Ω(κ) + Ω_{α,n p}(κ)", (_T(delta=1, kappa=1), _T(kappa=1)),
                    "α, n p", "omega", experiments=("snowwhite-n-sweep", "snowwhite-kappa-sweep")),
    ComplexityClaim("snowwhite", "comm", "b n Θ_α(1)", (_T(b=1, n=1),), "α", "theta", _PER_B,
                    experiments=("snowwhite-n-sweep",)),
    ComplexityClaim("spectre", "latency", "Δ O(1) + O_{α,Δ}(κ)/p", (_T(delta=1), _T(kappa=1, p=-1)),
                    "α, Δ", "O", experiments=("spectre-n-sweep", "spectre-rate-sweep")),
    ComplexityClaim("spectre", "comm", "b n Θ_α(1)", (_T(b=1, n=1),), "α", "theta", _PER_B,
                    experiments=("spectre-n-sweep",)),
    ComplexityClaim("algorand", "latency", "Δ O(1)", (_T(delta=1),), "", "O",
                    experiments=("algorand-n-sweep",)),
    ComplexityClaim("algorand", "comm", "b nΘ(κ) + n Ω_α(κ)", (_T(b=1, n=1, kappa=1), _T(n=1, kappa=1)),
                    "α", "mixed", _PER_B, experiments=("algorand-n-sweep",)),
    ComplexityClaim("tendermint", "latency", "Δ n Θ_α(1)", (_T(delta=1, n=1),), "α", "theta",
                    experiments=("tendermint-worst-n-sweep",),
                    note="worst case: byzantine leaders first in the rotation"),
    ComplexityClaim("tendermint", "comm", "(bn²+n³)Θ_α(1)", (_T(b=1, n=2), _T(n=3)), "α", "theta", _PER_B,
                    experiments=("tendermint-worst-n-sweep",),
                    note="worst case: byzantine leaders first in the rotation"),
    ComplexityClaim("hbbft", "latency", "Δ log(n) O_α(1)", (_T(delta=1, log_n=1),), "α", "O", semilog=True,
                    experiments=("hbbft-n-sweep",)),
    ComplexityClaim("hbbft", "comm", "bn O(1) + n³ log(n) O(κ)", (_T(b=1, n=1), _T(n=3, log_n=1, kappa=1)),
                    "", "O", _T(b=1, n=1), experiments=("hbbft-n-sweep",),
                    note="one epoch commits one b-bit batch per node"),
)


def get_claim(protocol: str, metric: str) -> ComplexityClaim:
    for c in CLAIMS:
        if c.protocol == protocol and c.metric == metric:
            return c
    raise KeyError(f"no claim for {protocol}/{metric}")


@dataclass(frozen=True)
class ExpectedExponent:
    exponent: float | None
    dominant: str
    status: str  # ok | inconclusive


def expected_exponent(claim: ComplexityClaim, axis: str, point: dict[str, float]) -> ExpectedExponent:
    """Exponent of the dominant term along ``axis`` at ``point`` (the sweep midpoint)."""
    param = AXIS_PARAM.get(axis)
    if param is None:
        return ExpectedExponent(None, "", "inconclusive")
    vals = sorted(((t.value(point), t) for t in claim.terms), key=lambda vt: -vt[0])
    top_v, top = vals[0]
    norm = claim.normalizer.exponent(param, point)
    e = top.exponent(param, point) - norm
    if len(vals) > 1:
        v2, t2 = vals[1]
        e2 = t2.exponent(param, point) - norm
        if abs(e - e2) > 1e-9 and top_v < CODOMINANCE_RATIO * v2:
            return ExpectedExponent(None, f"{top} ~ {t2}", "inconclusive")
    return ExpectedExponent(e, str(top), "ok")


@dataclass(frozen=True)
class ClaimCheck:
    claim: ComplexityClaim
    axis: str
    expected: float | None
    measured: float
    tolerance: float
    status: str  # validated | consistent-with | failed | inconclusive
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status in ("validated", "consistent-with")

    def row(self) -> dict[str, Any]:
        return dict(protocol=self.claim.protocol, metric=self.claim.metric, expression=self.claim.expression,
                    axis=self.axis, expected=self.expected, measured=self.measured, tolerance=self.tolerance,
                    status=self.status, detail=self.detail)


def validate_claim(fit: ScalingFit, claim: ComplexityClaim, point: dict[str, float],
                   tolerance: float | None = None) -> ClaimCheck:
    """Compare a fitted exponent with the claim's dominant exponent at ``point``.

    Theta claims need |slope - expected| <= tol. O claims only bound the slope
    from above and Omega claims from below; both report "consistent-with".
    """
    ok_label = "validated" if claim.bound == "theta" else "consistent-with"
    if fit.semilog:
        tol = SEMILOG_R2 if tolerance is None else tolerance
        good = fit.r2 >= tol and fit.slope > 0
        status = ("consistent-with" if claim.semilog else "inconclusive") if good else "failed"
        return ClaimCheck(claim, fit.axis, None, fit.slope, tol, status,
                          f"semilog slope {fit.slope:.3g}, r2 {fit.r2:.3f}")
    exp = expected_exponent(claim, fit.axis, point)
    if exp.status != "ok":
        return ClaimCheck(claim, fit.axis, None, fit.slope, tolerance or DEFAULT_TOL, "inconclusive",
                          f"co-dominant terms {exp.dominant}; widen the sweep" if exp.dominant else
                          f"claim does not constrain axis {fit.axis}")
    tol = tolerance if tolerance is not None else (ZERO_TOL if abs(exp.exponent) < 1e-9 else DEFAULT_TOL)
    diff = fit.slope - exp.exponent
    if claim.bound == "O":
        good = diff <= tol
    elif claim.bound == "omega":
        good = diff >= -tol
    else:
        good = abs(diff) <= tol
    status = ok_label if good else "failed"
    return ClaimCheck(claim, fit.axis, exp.exponent, fit.slope, tol, status, f"dominant term {exp.dominant}")
