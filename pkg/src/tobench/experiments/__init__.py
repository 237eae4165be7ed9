"""Sweeps, scaling fits, complexity claims, the permissionless classifier and reports."""

from __future__ import annotations

from .claims import CLAIMS, ClaimCheck, ComplexityClaim, Term, expected_exponent, get_claim, validate_claim
from .classify import PermissionlessVerdict, classify_permissionless
from .emit import CSV_COLUMNS, emit, read_csv, read_json
from .fit import ScalingFit, fit_points, fit_scaling
from .sweep import ExperimentSpec, run_point, run_sweep

__all__ = [
    "CLAIMS", "CSV_COLUMNS", "ClaimCheck", "ComplexityClaim", "ExperimentSpec", "PermissionlessVerdict",
    "ScalingFit", "Term", "classify_permissionless", "emit", "expected_exponent", "fit_points",
    "fit_scaling", "get_claim", "read_csv", "read_json", "run_point", "run_sweep", "validate_claim",
]
