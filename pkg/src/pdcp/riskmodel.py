"""Piecewise-deterministic compound Poisson surplus model.

Between claims the surplus follows ``x' = g(x)``; claims arrive at Poisson
rate ``lam`` and are i.i.d. with distribution ``Q``. Two drift fields are
supported: a constant premium rate ``g(x) = c`` and premium plus interest
``g(x) = rho * x + c``. Both have an infinite flow limit, so the surplus
between claims is strictly increasing.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import ModelInvalid, NumericFailure

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-14
QUAD_LIMIT = 200


@dataclass(frozen=True)
class ConstantDrift:
    c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c) and self.c > 0):
            raise ModelInvalid(f"premium rate c must be > 0, got {self.c}", key="c")

    def g(self, x):
        return self.c + 0.0 * x

    def dg(self, x):
        return 0.0 * x

    def shifted(self, u: float) -> ConstantDrift:
        """Drift net of a constant dividend rate ``u``."""
        return ConstantDrift(self.c - u)

    @property
    def g0(self) -> float:
        return self.c

    def to_dict(self) -> dict:
        return {"type": "constant", "c": self.c}


@dataclass(frozen=True)
class LinearDrift:
    rho: float
    c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise ModelInvalid(f"interest rate rho must be >= 0, got {self.rho}", key="rho")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ModelInvalid(f"premium rate c must be > 0, got {self.c}", key="c")

    def g(self, x):
        return self.rho * x + self.c

    def dg(self, x):
        return self.rho + 0.0 * x

    def shifted(self, u: float) -> LinearDrift:
        return LinearDrift(self.rho, self.c - u)

    @property
    def g0(self) -> float:
        return self.c

    def to_dict(self) -> dict:
        return {"type": "linear", "rho": self.rho, "c": self.c}


DriftField = ConstantDrift | LinearDrift


@dataclass(frozen=True)
class ExponentialClaims:
    """Exponential claim sizes with rate ``alpha`` (mean ``1/alpha``)."""

    alpha: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ModelInvalid(f"claim rate alpha must be > 0, got {self.alpha}", key="alpha")

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = -np.expm1(-self.alpha * np.maximum(y, 0.0))
        return float(out) if out.ndim == 0 else out

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y >= 0, self.alpha * np.exp(-self.alpha * np.maximum(y, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, standard_exponentials):
        """Map Exp(1) variates to claim sizes."""
        return np.asarray(standard_exponentials) / self.alpha

    @property
    def mean(self) -> float:
        return 1.0 / self.alpha

    def to_dict(self) -> dict:
        return {"type": "exponential", "alpha": self.alpha}


@dataclass(frozen=True)
class RiskModel:
    drift: DriftField
    lam: float
    delta: float
    claims: ExponentialClaims = field(default_factory=lambda: ExponentialClaims(1.0))

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ModelInvalid(f"claim intensity lambda must be > 0, got {self.lam}", key="lambda")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ModelInvalid(f"discount force delta must be > 0, got {self.delta}", key="delta")

    @property
    def alpha(self) -> float:
        return self.claims.alpha

    @property
    def is_constant(self) -> bool:
        return isinstance(self.drift, ConstantDrift) or (
            isinstance(self.drift, LinearDrift) and self.drift.rho == 0.0
        )

    def g(self, x):
        return self.drift.g(x)

    def dg(self, x):
        return self.drift.dg(x)

    def to_dict(self) -> dict:
        return {
            "drift": self.drift.to_dict(),
            "lambda": self.lam,
            "delta": self.delta,
            "claims": self.claims.to_dict(),
        }


@dataclass(frozen=True)
class SurplusEvent:
    t: float
    kind: str  # claim | lump | rate_start | barrier | ruin
    amount: float
    surplus: float


@dataclass
class SurplusPath:
    events: list[SurplusEvent]
    discounted_dividends: float
    ruin_time: float | None
    truncation_bound: float = 0.0

    def check(self) -> None:
        """Assert the path invariants; raises AssertionError on violation."""
        last = -math.inf
        for i, ev in enumerate(self.events):
            assert ev.t > last, f"event times not increasing at #{i}: {ev.t} <= {last}"
            assert ev.amount >= 0, f"negative amount at #{i}"
            if ev.kind == "ruin":
                assert i == len(self.events) - 1, "ruin must terminate the path"
            last = ev.t
        assert self.discounted_dividends >= 0


# --------------------------------------------------------------------------
# flow


def flow(drift: DriftField, x, t):
    """Surplus reached from ``x`` after time ``t`` without claims."""
    if isinstance(drift, ConstantDrift) or drift.rho == 0.0:
        return x + drift.c * t
    rho, c = drift.rho, drift.c
    # x e^{rho t} + (c/rho)(e^{rho t} - 1), written with expm1 for small rho*t
    em1 = np.expm1(rho * t)
    return x + x * em1 + c * em1 / rho


def flow_hit_time(drift: DriftField, x, target):
    """Time for the uncontrolled flow started at ``x`` to reach ``target >= x``."""
    if isinstance(drift, ConstantDrift) or drift.rho == 0.0:
        return (target - x) / drift.c
    rho, c = drift.rho, drift.c
    return np.log1p(rho * (target - x) / (rho * x + c)) / rho


# --------------------------------------------------------------------------
# generator


def claim_expectation(model: RiskModel, h: Callable[[float], float], x: float,
                      points: list[float] | None = None) -> float:
    """``int_0^x h(x - y) dQ(y)`` by adaptive Gauss-Kronrod quadrature."""
    if x <= 0:
        return 0.0
    pdf = model.claims.pdf
    pts = [p for p in (points or []) if 0.0 < p < x] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(
                lambda y: h(x - y) * pdf(y), 0.0, x,
                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, points=pts,
            )
        except integrate.IntegrationWarning as exc:
            raise NumericFailure(f"claim integral at x={x}: {exc}", module="riskmodel") from exc
    return float(val)


def generator_apply(model: RiskModel, h: Callable, dh: Callable, x: float,
                    points: list[float] | None = None) -> float:
    """Apply the PDCP generator to ``h`` at ``x >= 0``.

    Returns ``g(x) h'(x) - lam h(x) + lam int_0^x h(x-y) dQ(y)``, with ``h``
    taken to vanish on the negative half-line.
    """
    lam = model.lam
    return float(model.g(x) * dh(x) - lam * h(x) + lam * claim_expectation(model, h, x, points))


# --------------------------------------------------------------------------
# JSON model description

_DRIFT_KEYS = {"constant": {"type", "c"}, "linear": {"type", "rho", "c"}}
_CLAIM_KEYS = {"exponential": {"type", "alpha"}}
_MODEL_KEYS = {"drift", "lambda", "delta", "claims"}


def _number(obj: Mapping, key: str, path: str) -> float:
    if key not in obj:
        raise ModelInvalid(f"missing key '{path}{key}'", key=f"{path}{key}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ModelInvalid(f"'{path}{key}' must be a finite number, got {v!r}", key=f"{path}{key}")
    return float(v)


def _reject_unknown(obj: Mapping, allowed: set[str], path: str) -> None:
    for k in obj:
        if k not in allowed:
            raise ModelInvalid(f"unknown key '{path}{k}'", key=f"{path}{k}")


def _named(fn, path: str):
    try:
        return fn()
    except ModelInvalid as exc:
        raise ModelInvalid(exc.reason, key=f"{path}{exc.key}" if exc.key else path.rstrip(".")) from None


def model_from_dict(d: Mapping[str, Any]) -> RiskModel:
    """Build a RiskModel from its JSON description, rejecting unknown keys."""
    if not isinstance(d, Mapping):
        raise ModelInvalid("model description must be a JSON object")
    _reject_unknown(d, _MODEL_KEYS, "")
    for k in ("drift", "claims"):
        if not isinstance(d.get(k), Mapping):
            raise ModelInvalid(f"'{k}' must be an object", key=k)

    dd = d["drift"]
    kind = dd.get("type")
    if kind not in _DRIFT_KEYS:
        raise ModelInvalid(f"unknown drift type {kind!r}", key="drift.type")
    _reject_unknown(dd, _DRIFT_KEYS[kind], "drift.")
    if kind == "constant":
        c = _number(dd, "c", "drift.")
        drift = _named(lambda: ConstantDrift(c), "drift.")
    else:
        rho, c = _number(dd, "rho", "drift."), _number(dd, "c", "drift.")
        drift = _named(lambda: LinearDrift(rho, c), "drift.")

    cd = d["claims"]
    if cd.get("type") not in _CLAIM_KEYS:
        raise ModelInvalid(f"unknown claims type {cd.get('type')!r}", key="claims.type")
    _reject_unknown(cd, _CLAIM_KEYS[cd["type"]], "claims.")
    alpha = _number(cd, "alpha", "claims.")
    claims = _named(lambda: ExponentialClaims(alpha), "claims.")

    lam, delta = _number(d, "lambda", ""), _number(d, "delta", "")
    return RiskModel(drift=drift, lam=lam, delta=delta, claims=claims)


def load_model(path: str | Path) -> RiskModel:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelInvalid(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(data)
