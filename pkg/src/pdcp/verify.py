"""Residual and structural checks for candidate value functions.

A candidate is any object with ``value(x)`` and ``deriv(x)``; if it also has
``claim_integral(model, x)`` that exact path is used, otherwise the claim term
is computed by adaptive quadrature. ``knot`` (threshold or barrier) is used
for smooth-fit checks and as a quadrature breakpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .riskmodel import RiskModel, claim_expectation

RESIDUAL_TOL = 1e-6
SMOOTH_FIT_TOL = 1e-9


class Candidate(Protocol):
    def value(self, x): ...

    def deriv(self, x): ...


@dataclass(frozen=True)
class FunctionCandidate:
    """Wraps bare callables as a candidate."""

    V: Callable
    dV: Callable
    knot: float | None = None

    def value(self, x):
        return self.V(x)

    def deriv(self, x):
        return self.dV(x)


@dataclass(frozen=True)
class Scaled:
    """``factor * base``; used to corrupt a valid solution in mutation tests."""

    base: Candidate
    factor: float

    @property
    def knot(self):
        return getattr(self.base, "knot", None)

    def value(self, x):
        return self.factor * self.base.value(x)

    def deriv(self, x):
        return self.factor * self.base.deriv(x)


def _knot(candidate) -> float | None:
    return getattr(candidate, "knot", None)


def claim_integral(candidate, model: RiskModel, x: float, method: str = "auto") -> float:
    """``lam int_0^x V(x - y) dQ(y)``; ``method`` is ``auto``, ``exact`` or ``quad``."""
    if x <= 0:
        return 0.0
    exact = getattr(candidate, "claim_integral", None)
    if method == "exact" or (method == "auto" and exact is not None):
        if exact is None:
            raise TypeError("candidate has no exact claim integral")
        return float(exact(model, x))
    knot = _knot(candidate)
    pts = [x - knot] if knot is not None else None
    return model.lam * claim_expectation(model, candidate.value, x, pts)


def _base_terms(candidate, model: RiskModel, x: float) -> tuple[float, float, float]:
    V = float(candidate.value(x))
    dV = float(candidate.deriv(x))
    return V, dV, claim_integral(candidate, model, x)


def hjb_residual(candidate, model: RiskModel, u0: float, x: float) -> float:
    """``sup_{u in [0, u0]} {(g - u) V' - (lam + delta) V + lam int V dQ + u}``.

    The bracket is affine in ``u`` with slope ``1 - V'``, so the sup is attained at an endpoint.
    """
    return hjb_terms(candidate, model, u0, x)[0]


def hjb_terms(candidate, model: RiskModel, u0: float, x: float) -> tuple[float, float]:
    """(residual, maximising rate) at ``x``."""
    V, dV, I = _base_terms(candidate, model, x)
    base = float(model.g(x)) * dV - (model.lam + model.delta) * V + I
    at_u0 = base + u0 * (1.0 - dV)
    return (at_u0, u0) if at_u0 > base else (base, 0.0)


def qvi_terms(candidate, model: RiskModel, x: float) -> tuple[float, float, float]:
    """(operator term, gradient term, max of the two)."""
    V, dV, I = _base_terms(candidate, model, x)
    term1 = float(model.g(x)) * dV - (model.lam + model.delta) * V + I
    term2 = 1.0 - dV
    return term1, term2, max(term1, term2)


def qvi_residual(candidate, model: RiskModel, x: float) -> float:
    return qvi_terms(candidate, model, x)[2]


@dataclass
class ResidualReport:
    kind: str
    grid: np.ndarray
    residuals: np.ndarray
    tolerance: float
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    structure_ok: bool = True
    structure_notes: list[str] = field(default_factory=list)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    @property
    def worst_x(self) -> float | None:
        return float(self.grid[np.argmax(np.abs(self.residuals))]) if self.residuals.size else None

    @property
    def passed(self) -> bool:
        return self.max_abs <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": int(self.grid.size),
            "max_abs": self.max_abs,
            "worst_x": self.worst_x,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "structure_ok": self.structure_ok,
            "structure_notes": self.structure_notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("x,residual\n")
            for x, r in zip(self.grid, self.residuals):
                fh.write(f"{x:.17g},{r:.17g}\n")


def hjb_report(candidate, model: RiskModel, u0: float, grid: Sequence[float],
               tol: float = RESIDUAL_TOL) -> ResidualReport:
    """HJB residuals on ``grid`` plus the policy sign pattern around the threshold."""
    xs = np.asarray(grid, dtype=float)
    res, arg = np.empty(xs.size), np.empty(xs.size)
    for i, x in enumerate(xs):
        res[i], arg[i] = hjb_terms(candidate, model, u0, float(x))
    report = ResidualReport("hjb", xs, res, tol, {"maximiser": arg})
    knot = _knot(candidate)
    lo = 0.0 if knot is None else knot
    # at the knot V' = 1 and both rates are optimal; skip points within 1e-9
    wrong_below = xs[(xs < lo - 1e-9) & (arg != 0.0)]
    wrong_above = xs[(xs > lo + 1e-9) & (arg != u0)]
    if knot is None:
        wrong_below = np.empty(0)
    for label, bad in (("u=0 below threshold", wrong_below), ("u=u0 above threshold", wrong_above)):
        if bad.size:
            report.structure_ok = False
            report.structure_notes.append(f"{label} fails at x={bad[0]:.6g}")
    return report


def qvi_report(candidate, model: RiskModel, grid: Sequence[float], tol: float = RESIDUAL_TOL) -> ResidualReport:
    """QVI residuals on ``grid`` (points x <= 0 are dropped) plus the region sign pattern."""
    xs = np.asarray(grid, dtype=float)
    xs = xs[xs > 0]
    t1, t2, mx = (np.empty(xs.size) for _ in range(3))
    for i, x in enumerate(xs):
        t1[i], t2[i], mx[i] = qvi_terms(candidate, model, float(x))
    report = ResidualReport("qvi", xs, mx, tol, {"term1": t1, "term2": t2})
    knot = _knot(candidate)
    b = 0.0 if knot is None else knot
    below, above = xs < b - 1e-9, xs > b + 1e-9
    checks = [
        ("term2 < 0 below b", below & ~(t2 < 0)),
        ("|term1| <= tol below b", below & ~(np.abs(t1) <= tol)),
        ("term2 = 0 above b", above & ~(np.abs(t2) <= SMOOTH_FIT_TOL)),
        ("term1 <= tol above b", above & ~(t1 <= tol)),
    ]
    for label, bad in checks:
        if bad.any():
            report.structure_ok = False
            report.structure_notes.append(f"{label} fails at x={xs[np.argmax(bad)]:.6g}")
    return report


@dataclass
class PropertyItem:
    name: str
    passed: bool
    worst: float
    worst_x: float | None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "worst_x": self.worst_x}


@dataclass
class PropertyReport:
    items: list[PropertyItem]

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def __getitem__(self, name: str) -> PropertyItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "items": [i.to_dict() for i in self.items]}


def smooth_fit_item(name: str, candidate, tol: float) -> PropertyItem:
    knot = _knot(candidate)
    if knot is None:
        return PropertyItem(name, True, 0.0, None)
    gap = abs(float(candidate.deriv(knot)) - 1.0)
    return PropertyItem(name, gap <= tol, gap, float(knot))


def bound_item(V_R, u0: float, delta: float, xs: np.ndarray) -> PropertyItem:
    vals = V_R.value(xs)
    excess = np.maximum(-vals, vals - u0 / delta)
    i = int(np.argmax(excess))
    return PropertyItem("bounds", bool(excess[i] <= 0), float(max(excess[i], 0.0)), float(xs[i]))


def monotone_item(V_R, xs: np.ndarray, name: str = "nondecreasing") -> PropertyItem:
    drops = -np.diff(V_R.value(xs))
    i = int(np.argmax(drops))
    return PropertyItem(name, bool(drops[i] <= 0), float(max(drops[i], 0.0)), float(xs[i + 1]))


def increment_item(V, xs: np.ndarray, slack: float = 1e-12) -> PropertyItem:
    """``V(x) - V(y) >= x - y`` for every pair; checking consecutive pairs suffices by telescoping,
    but all pairs are compared to report the worst one."""
    vals = V.value(xs)
    h = vals - xs
    # V(x)-V(y)-(x-y) = h(x)-h(y) >= 0 for x >= y  <=>  h nondecreasing
    running_max = np.maximum.accumulate(h)
    deficit = running_max - h
    i = int(np.argmax(deficit))
    scale = slack * max(1.0, float(np.max(np.abs(vals))))
    return PropertyItem("increment", bool(deficit[i] <= scale), float(deficit[i]), float(xs[i]))


def property_suite(V_R, V, model: RiskModel, u0: float, grid: Sequence[float],
                   smooth_tol: float = SMOOTH_FIT_TOL) -> PropertyReport:
    """Bounds and monotonicity of V_R, increments of V, dominance V >= V_R and smooth fit."""
    xs = np.asarray(grid, dtype=float)
    vr, v = V_R.value(xs), V.value(xs)
    gap = vr - v
    j = int(np.argmax(gap))
    scale = 1e-12 * max(1.0, float(np.max(np.abs(v))))
    dominance = PropertyItem("dominance", bool(gap[j] <= scale), float(max(gap[j], 0.0)), float(xs[j]))
    smooth_r = smooth_fit_item("smooth_fit_restricted", V_R, smooth_tol)
    smooth_u = smooth_fit_item("smooth_fit_unrestricted", V, smooth_tol)
    smooth = PropertyItem(
        "smooth_fit",
        smooth_r.passed and smooth_u.passed,
        max(smooth_r.worst, smooth_u.worst),
        smooth_r.worst_x if smooth_r.worst > smooth_u.worst else smooth_u.worst_x,
    )
    return PropertyReport([
        bound_item(V_R, u0, model.delta, xs),
        monotone_item(V_R, xs),
        increment_item(V, xs),
        dominance,
        smooth,
    ])


def endpoint_sup_gap(dV: float, base: float, u0: float, n: int = 101) -> float:
    """Difference between the sup over an ``n``-point rate grid and the endpoint maximum."""
    us = np.linspace(0.0, u0, n)
    grid_sup = float(np.max(base + us * (1.0 - dV)))
    return grid_sup - max(base, base + u0 * (1.0 - dV))


def finite_difference_deriv(candidate, x: float) -> float:
    h = 1e-6 * max(1.0, abs(x))
    return (float(candidate.value(x + h)) - float(candidate.value(x - h))) / (2 * h)

