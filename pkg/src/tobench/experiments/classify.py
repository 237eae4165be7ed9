"""Permissionless-suitability verdict from fitted n-slopes."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigurationError
from .claims import DEFAULT_TOL, ZERO_TOL
from .fit import ScalingFit


@dataclass(frozen=True)
class PermissionlessVerdict:
    protocol: str
    comm_slope_n: float
    latency_slope_n: float
    comm_tol: float
    latency_tol: float

    @property
    def suited(self) -> bool:
        return self.comm_slope_n <= 1 + self.comm_tol and self.latency_slope_n <= 0 + self.latency_tol

    @property
    def verdict(self) -> str:
        return "suited" if self.suited else "not-suited"

    def row(self) -> dict:
        return dict(protocol=self.protocol, comm_slope_n=self.comm_slope_n,
                    latency_slope_n=self.latency_slope_n, comm_tol=self.comm_tol,
                    latency_tol=self.latency_tol, verdict=self.verdict)


def classify_permissionless(protocol: str, comm_fit: ScalingFit | None, latency_fit: ScalingFit | None,
                            comm_tol: float = DEFAULT_TOL, latency_tol: float = ZERO_TOL) -> PermissionlessVerdict:
    """Suited iff communication grows at most linearly in n and latency does not grow with n."""
    if comm_fit is None or latency_fit is None:
        raise ConfigurationError(f"{protocol}: both comm and latency n-sweeps are required")
    for f in (comm_fit, latency_fit):
        if f.axis != "n" or f.semilog:
            raise ConfigurationError(f"{protocol}: classifier needs log-log fits along n")
    return PermissionlessVerdict(protocol, comm_fit.slope, latency_fit.slope, comm_tol, latency_tol)
