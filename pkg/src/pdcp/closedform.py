"""Closed-form threshold and barrier solutions for constant premium and exponential claims.

With ``g(x) = c`` and claims ~ Exp(alpha), the increasing solution of the
zero-dividend integro-differential equation is

    psi1(x) = (r + alpha) e^{rx} - (s + alpha) e^{sx}

where ``r > 0 > s > -alpha`` solve ``c xi^2 - (lam + delta - alpha c) xi - alpha delta = 0``.
Paying at rate ``u0`` replaces ``c`` by ``c - u0`` and the bounded solution
is ``-e^{tx}`` with ``t`` the negative root of the shifted quadratic.

Value functions are stored as sums of ``coef * x**p * exp(rate * (x - shift))``
on consecutive intervals, which allows exact evaluation, differentiation and
an exact claim integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InternalInvariantError, ModelInvalid
from .riskmodel import ConstantDrift, LinearDrift, RiskModel


@dataclass(frozen=True)
class CharRoots:
    r: float
    s: float
    t: float

    def to_dict(self) -> dict:
        return {"r": self.r, "s": self.s, "t": self.t}


def _quadratic_roots(a: float, b: float, c: float) -> tuple[float, float]:
    """Real roots (lo, hi) of ``a x^2 + b x + c`` without cancellation."""
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise InternalInvariantError(f"negative discriminant {disc}")
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    x1 = q / a
    x2 = c / q if q != 0 else -x1
    return (x1, x2) if x1 < x2 else (x2, x1)


def char_roots(c: float, u0: float, lam: float, delta: float, alpha: float) -> CharRoots:
    """Roots of the two characteristic quadratics.

    ``(r, s)`` solve ``c xi^2 - (lam + delta - alpha c) xi - alpha delta = 0`` and
    ``t`` is the negative root of the same quadratic with ``c`` replaced by ``c - u0``.
    """
    if not c > u0:
        raise ModelInvalid(f"maximal dividend rate u0={u0} must be below the premium rate c={c}", key="u0")
    if u0 < 0:
        raise ModelInvalid(f"u0 must be >= 0, got {u0}", key="u0")
    if lam <= 0 or delta <= 0 or alpha <= 0:
        raise ModelInvalid("lambda, delta and alpha must be positive")
    s, r = _quadratic_roots(c, -(lam + delta - alpha * c), -alpha * delta)
    if u0 == 0:
        t = s
    else:
        cu = c - u0
        t, _ = _quadratic_roots(cu, -(lam + delta - alpha * cu), -alpha * delta)
    if not (r > 0 > s > -alpha and t < 0):
        raise InternalInvariantError(f"root ordering violated: r={r}, s={s}, t={t}")
    return CharRoots(r, s, t)


def _roots_for(model: RiskModel, u0: float) -> CharRoots:
    return char_roots(_premium(model), u0, model.lam, model.delta, model.alpha)


def _premium(model: RiskModel) -> float:
    d = model.drift
    if isinstance(d, ConstantDrift) or (isinstance(d, LinearDrift) and d.rho == 0.0):
        return d.c
    raise ModelInvalid("closed forms require a constant drift; use the numeric solver", key="drift.type")


# --------------------------------------------------------------------------
# psi1


def psi1_eval(roots: CharRoots, alpha: float, x):
    r, s = roots.r, roots.s
    x = np.asarray(x, dtype=float)
    # e^{rx} factored out: the remaining exponential e^{(s-r)x} only underflows
    out = np.exp(r * x) * ((r + alpha) - (s + alpha) * np.exp((s - r) * x))
    return float(out) if out.ndim == 0 else out


def psi1_deriv(roots: CharRoots, alpha: float, x):
    r, s = roots.r, roots.s
    x = np.asarray(x, dtype=float)
    out = np.exp(r * x) * (r * (r + alpha) - s * (s + alpha) * np.exp((s - r) * x))
    return float(out) if out.ndim == 0 else out


def threshold_d(roots: CharRoots) -> float | None:
    """Optimal threshold, or None when paying the maximal rate at once is optimal."""
    r, s, t = roots.r, roots.s, roots.t
    arg = s * (s - t) / (r * (r - t))
    if not arg > 0:
        raise InternalInvariantError(f"threshold log argument {arg} is not positive")
    if arg <= 1.0:
        return None
    return math.log(arg) / (r - s)


def barrier_b(roots: CharRoots, alpha: float) -> float | None:
    """Minimiser of psi1', or None in the pay-everything regime."""
    r, s = roots.r, roots.s
    b = math.log(s * s * (s + alpha) / (r * r * (r + alpha))) / (r - s)
    return b if b > 0 else None


# --------------------------------------------------------------------------
# piecewise exponential functions

Term = tuple[float, int, float, float]  # coef, power, rate, shift


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    terms: tuple[Term, ...]

    def value(self, x):
        return sum(c * (x ** p if p else 1.0) * np.exp(k * (x - sh)) for c, p, k, sh in self.terms)

    def deriv(self, x):
        out = 0.0
        for c, p, k, sh in self.terms:
            e = np.exp(k * (x - sh))
            out = out + (c * k * e if p == 0 else c * e * (1.0 + k * x))
        return out


def _exp_weighted_integral(term: Term, a: float, b: float, x: float, alpha: float) -> float:
    """``int_a^b coef z^p e^{k(z - sh)} alpha e^{-alpha (x - z)} dz`` with ``p in {0, 1}``."""
    c, p, k, sh = term
    m = k + alpha
    ea = math.exp(k * (a - sh) - alpha * (x - a))
    eb = math.exp(k * (b - sh) - alpha * (x - b))
    if abs(m) * max(b - a, 1e-300) < 1e-8:
        # e^{m z} nearly flat over [a, b]; integrate the series in m
        mid = math.exp(k * (0.5 * (a + b) - sh) - alpha * (x - 0.5 * (a + b)))
        base = (b - a) if p == 0 else 0.5 * (b * b - a * a)
        return c * alpha * mid * base
    if p == 0:
        return c * alpha * (eb - ea) / m
    return c * alpha * (eb * (b / m - 1.0 / (m * m)) - ea * (a / m - 1.0 / (m * m)))


class PiecewiseValue:
    """Value function made of exponential-polynomial pieces; zero below 0."""

    scheme: str
    regime: str
    parameter: float | None
    roots: CharRoots | None
    pieces: tuple[Piece, ...]

    @property
    def knot(self) -> float | None:
        return self.parameter

    def _locate(self, x: np.ndarray) -> np.ndarray:
        edges = np.array([p.hi for p in self.pieces[:-1]])
        return np.searchsorted(edges, x, side="right")

    def _apply(self, x, which: str):
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa)
        out = np.zeros_like(flat)
        idx = self._locate(flat)
        for i, piece in enumerate(self.pieces):
            mask = (idx == i) & (flat >= 0)
            if mask.any():
                out[mask] = getattr(piece, which)(flat[mask])
        return float(out[0]) if xa.ndim == 0 else out

    def value(self, x):
        return self._apply(x, "value")

    def deriv(self, x):
        return self._apply(x, "deriv")

    __call__ = value

    def claim_integral(self, model: RiskModel, x: float) -> float:
        """Exact ``lam int_0^x V(x - y) alpha e^{-alpha y} dy`` for exponential claims."""
        if x <= 0:
            return 0.0
        alpha = model.alpha
        total = 0.0
        for piece in self.pieces:
            a, b = piece.lo, min(piece.hi, x)
            if b <= a:
                break
            total += sum(_exp_weighted_integral(term, a, b, x, alpha) for term in piece.terms)
        return model.lam * total

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "regime": self.regime,
            "parameter": self.parameter,
            "roots": self.roots.to_dict() if self.roots else None,
        }


@dataclass(frozen=True, eq=False)
class RestrictedSolution(PiecewiseValue):
    regime: str  # threshold | paymax
    parameter: float | None
    u0: float
    roots: CharRoots
    pieces: tuple[Piece, ...]
    scheme: str = "restricted"

    @property
    def d(self) -> float | None:
        return self.parameter


@dataclass(frozen=True, eq=False)
class UnrestrictedSolution(PiecewiseValue):
    regime: str  # barrier | payall
    parameter: float | None
    roots: CharRoots
    pieces: tuple[Piece, ...]
    scheme: str = "unrestricted"

    @property
    def b(self) -> float | None:
        return self.parameter


def _psi1_terms(roots: CharRoots, alpha: float, scale: float) -> tuple[Term, ...]:
    return ((scale * (roots.r + alpha), 0, roots.r, 0.0), (-scale * (roots.s + alpha), 0, roots.s, 0.0))


def restricted_value(model: RiskModel, u0: float) -> RestrictedSolution:
    """Optimal value under dividend rates bounded by ``u0``."""
    c = _premium(model)
    if not u0 > 0:
        raise ModelInvalid(f"u0 must be > 0 for the restricted scheme, got {u0}", key="u0")
    roots = char_roots(c, u0, model.lam, model.delta, model.alpha)
    alpha, lam, delta, t = model.alpha, model.lam, model.delta, roots.t
    d = threshold_d(roots)
    if d is not None:
        k = 1.0 / psi1_deriv(roots, alpha, d)
        pieces = (
            Piece(0.0, d, _psi1_terms(roots, alpha, k)),
            Piece(d, math.inf, ((u0 / delta, 0, 0.0, 0.0), (1.0 / t, 0, t, d))),
        )
        return RestrictedSolution("threshold", d, u0, roots, pieces)
    # pay u0 from the start: u0/delta + C e^{tx}, C fixed by the equation at x = 0
    C = (u0 * lam / delta) / ((c - u0) * t - (lam + delta))
    if not C < 0:
        raise InternalInvariantError(f"pay-max coefficient C={C} is not negative")
    pieces = (Piece(0.0, math.inf, ((u0 / delta, 0, 0.0, 0.0), (C, 0, t, 0.0))),)
    return RestrictedSolution("paymax", None, u0, roots, pieces)


def unrestricted_value(model: RiskModel) -> UnrestrictedSolution:
    """Optimal value with unrestricted (singular) dividends."""
    c = _premium(model)
    roots = char_roots(c, 0.0, model.lam, model.delta, model.alpha)
    alpha, lam, delta = model.alpha, model.lam, model.delta
    b = barrier_b(roots, alpha)
    if b is not None:
        k = 1.0 / psi1_deriv(roots, alpha, b)
        level = psi1_eval(roots, alpha, b) * k
        pieces = (
            Piece(0.0, b, _psi1_terms(roots, alpha, k)),
            Piece(b, math.inf, ((1.0, 1, 0.0, 0.0), (level - b, 0, 0.0, 0.0))),
        )
        return UnrestrictedSolution("barrier", b, roots, pieces)
    pieces = (Piece(0.0, math.inf, ((1.0, 1, 0.0, 0.0), (c / (lam + delta), 0, 0.0, 0.0))),)
    return UnrestrictedSolution("payall", None, roots, pieces)


def eval_value(solution: PiecewiseValue, x):
    return solution.value(x)


def eval_deriv(solution: PiecewiseValue, x, side: str = "right"):
    """Derivative; ``side='left'`` takes the limit from below at a knot."""
    if side == "left" and solution.knot is not None:
        x = np.asarray(x, dtype=float)
        at_knot = x == solution.knot
        if np.any(at_knot):
            left = solution.pieces[0].deriv(x)
            out = np.where(at_knot, left, solution.deriv(x))
            return float(out) if out.ndim == 0 else out
    return solution.deriv(x)


def solution_grid(solution: PiecewiseValue, xs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    return solution.value(xs), solution.deriv(xs)
