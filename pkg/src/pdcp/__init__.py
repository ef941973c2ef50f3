"""Optimal dividend problems for piecewise-deterministic compound Poisson surplus models."""

from __future__ import annotations

from .closedform import CharRoots, char_roots, restricted_value, unrestricted_value
from .errors import (
    HypothesisViolation,
    InternalInvariantError,
    ModelInvalid,
    NumericFailure,
    PDCPError,
    VerificationFailed,
    XMaxTooSmall,
)
from .montecarlo import Barrier, ConstantRate, NoDividends, SimConfig, Threshold, estimate_value
from .numsolve import SolveSettings, solve_restricted, solve_unrestricted
from .riskmodel import ConstantDrift, ExponentialClaims, LinearDrift, RiskModel, load_model, model_from_dict

__all__ = [
    "Barrier", "CharRoots", "ConstantDrift", "ConstantRate", "ExponentialClaims", "HypothesisViolation",
    "InternalInvariantError", "LinearDrift", "ModelInvalid", "NoDividends", "NumericFailure", "PDCPError",
    "RiskModel", "SimConfig", "SolveSettings", "Threshold", "VerificationFailed", "XMaxTooSmall",
    "char_roots", "estimate_value", "load_model", "model_from_dict", "restricted_value",
    "solve_restricted", "solve_unrestricted", "unrestricted_value",
]
