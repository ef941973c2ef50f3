"""Numerical threshold and barrier solutions for drifts without closed forms.

For exponential claims the integro-differential equation

    (g - u) phi' - (lam + delta) phi + lam int_0^x phi(x - y) alpha e^{-alpha y} dy = 0

is equivalent (apply ``d/dx + alpha``) to the second-order ODE

    (g - u) phi'' + [alpha (g - u) + g' - (lam + delta)] phi' - alpha delta phi = 0

together with its value at ``x = 0``. The increasing solution (``u = 0``) is
integrated forward from ``phi(0) = 1, phi'(0) = (lam + delta) / g(0)``; the
bounded solution (``u = u0``) backward from ``x_max`` along the decaying mode.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import closedform
from .errors import HypothesisViolation, ModelInvalid, NumericFailure, XMaxTooSmall
from .riskmodel import RiskModel

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class NonUniquenessWarning(UserWarning):
    """More than one candidate free boundary was found."""


@dataclass(frozen=True)
class SolveSettings:
    x_max: float = 40.0
    n_steps: int = 4000
    ode_tol: float = 1e-8
    root_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_max) and self.x_max > 0):
            raise ModelInvalid(f"x_max must be > 0, got {self.x_max}", key="x_max")
        if self.n_steps < 100:
            raise ModelInvalid(f"n_steps must be >= 100, got {self.n_steps}", key="n_steps")
        for name in ("ode_tol", "root_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ModelInvalid(f"{name} must lie in (0, 1e-2], got {v}", key=name)


def default_x_max(model: RiskModel) -> float:
    """Three times the larger of the frozen-drift barrier and the e-folding scale ``20/|s|``."""
    g0 = model.drift.g0
    roots = closedform.char_roots(g0, 0.0, model.lam, model.delta, model.alpha)
    b0 = closedform.barrier_b(roots, model.alpha) or 0.0
    return 3.0 * max(b0, 20.0 / abs(roots.s))


def default_settings(model: RiskModel, cover: float = 0.0, **overrides) -> SolveSettings:
    """Settings with the default domain (extended to ``1.5 * cover``) and a step of at most 0.01."""
    x_max = overrides.pop("x_max", None) or max(default_x_max(model), 1.5 * cover)
    n_steps = overrides.pop("n_steps", None) or max(4000, math.ceil(x_max / 0.01))
    return SolveSettings(x_max=x_max, n_steps=n_steps, **overrides)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a smooth function with its derivatives on ``[0, x_max]``.

    Evaluation between nodes is Hermite interpolation: quintic when second
    derivatives are stored, cubic otherwise.
    """

    xs: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    curvs: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        if not (len(xs) == len(self.values) == len(self.derivs) and len(xs) >= 2):
            raise ModelInvalid("grid arrays must share a length >= 2")
        if xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
            raise ModelInvalid("grid abscissae must start at 0 and increase strictly")
        arrays = [self.values, self.derivs] + ([self.curvs] if self.curvs is not None else [])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise NumericFailure("non-finite grid samples", module="numsolve")

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    def _coeffs(self, x):
        xs = self.xs
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        h = xs[i + 1] - xs[i]
        tau = (x - xs[i]) / h
        y0, y1 = self.values[i], self.values[i + 1]
        m0, m1 = h * self.derivs[i], h * self.derivs[i + 1]
        dy = y1 - y0
        if self.curvs is None:
            a = [y0, m0, 3 * dy - 2 * m0 - m1, -2 * dy + m0 + m1, 0.0 * dy, 0.0 * dy]
        else:
            k0, k1 = h * h * self.curvs[i], h * h * self.curvs[i + 1]
            a = [
                y0, m0, 0.5 * k0,
                10 * dy - 6 * m0 - 4 * m1 - 1.5 * k0 + 0.5 * k1,
                -15 * dy + 8 * m0 + 7 * m1 + 1.5 * k0 - k1,
                6 * dy - 3 * m0 - 3 * m1 - 0.5 * k0 + 0.5 * k1,
            ]
        return a, tau, h

    def _eval(self, x, order: int):
        xa = np.asarray(x, dtype=float)
        a, tau, h = self._coeffs(xa)
        if order == 0:
            out = a[0] + tau * (a[1] + tau * (a[2] + tau * (a[3] + tau * (a[4] + tau * a[5]))))
        elif order == 1:
            out = (a[1] + tau * (2 * a[2] + tau * (3 * a[3] + tau * (4 * a[4] + tau * 5 * a[5])))) / h
        else:
            out = (2 * a[2] + tau * (6 * a[3] + tau * (12 * a[4] + tau * 20 * a[5]))) / (h * h)
        return float(out) if xa.ndim == 0 else out

    def value(self, x):
        return self._eval(x, 0)

    def deriv(self, x):
        return self._eval(x, 1)

    def curv(self, x):
        return self._eval(x, 2)

    __call__ = value

    def weighted_integral(self, a: float, b: float, x: float, alpha: float) -> float:
        """``int_a^b f(z) alpha e^{-alpha (x - z)} dz`` by 8-point Gauss-Legendre per grid cell."""
        if b <= a:
            return 0.0
        xs = self.xs
        lo = max(np.searchsorted(xs, a, side="right") - 1, 0)
        hi = min(np.searchsorted(xs, b, side="left"), len(xs) - 1)
        edges = xs[lo:hi + 1].copy()
        edges[0], edges[-1] = a, b
        if len(edges) < 2:
            edges = np.array([a, b])
        left, right = edges[:-1], edges[1:]
        half = 0.5 * (right - left)
        z = (0.5 * (left + right))[:, None] + half[:, None] * _GL_NODES[None, :]
        f = self.value(z.ravel()).reshape(z.shape)
        w = alpha * np.exp(-alpha * (x - z))
        return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * f * w))

    def to_csv(self, path: str | Path) -> None:
        write_grid_csv(path, self.xs, self.values, self.derivs)

    @classmethod
    def from_csv(cls, path: str | Path) -> GridFunction:
        xs, vs, ds = read_grid_csv(path)
        return cls(xs, vs, ds)


def write_grid_csv(path, xs, values, derivs) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x,value,deriv\n")
        for x, v, d in zip(xs, values, derivs):
            fh.write(f"{x:.17g},{v:.17g},{d:.17g}\n")


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["x", "value", "deriv"]:
        raise ModelInvalid(f"{path}: expected header 'x,value,deriv'")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ModelInvalid(f"{path}: malformed rows")
    return data[:, 0], data[:, 1], data[:, 2]


# --------------------------------------------------------------------------
# ODE integration


def _rhs(model: RiskModel, u: float):
    lam_delta = model.lam + model.delta
    alpha, delta = model.alpha, model.delta

    def f(x, y, dy):
        G = model.g(x) - u
        return ((lam_delta - alpha * G - model.dg(x)) * dy + alpha * delta * y) / G

    return f


def _rk4(f, xs: np.ndarray, y0: float, dy0: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 for ``y'' = f(x, y, y')`` over the node sequence ``xs``."""
    n = len(xs)
    ys, dys = np.empty(n), np.empty(n)
    y, dy = y0, dy0
    ys[0], dys[0] = y, dy
    for i in range(n - 1):
        x, h = xs[i], xs[i + 1] - xs[i]
        k1y, k1d = dy, f(x, y, dy)
        k2y, k2d = dy + 0.5 * h * k1d, f(x + 0.5 * h, y + 0.5 * h * k1y, dy + 0.5 * h * k1d)
        k3y, k3d = dy + 0.5 * h * k2d, f(x + 0.5 * h, y + 0.5 * h * k2y, dy + 0.5 * h * k2d)
        k4y, k4d = dy + h * k3d, f(x + h, y + h * k3y, dy + h * k3d)
        y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        dy = dy + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
        if not (math.isfinite(y) and math.isfinite(dy)):
            raise NumericFailure(f"ODE step produced non-finite values at x={xs[i + 1]}", module="numsolve")
        ys[i + 1], dys[i + 1] = y, dy
    return ys, dys


def _integrate(f, xs, y0, dy0, ode_tol: float, label: str) -> tuple[np.ndarray, np.ndarray]:
    ys, dys = _rk4(f, xs, y0, dy0)
    # step-doubling estimate on every other node
    yc, _ = _rk4(f, xs[::2], y0, dy0)
    err = np.max(np.abs(yc - ys[::2]) / np.maximum(np.abs(ys[::2]), 1.0)) / 15.0
    if err > ode_tol:
        warnings.warn(f"{label}: estimated ODE error {err:.2e} exceeds ode_tol={ode_tol:.1e}; refine n_steps",
                      RuntimeWarning, stacklevel=3)
    return ys, dys


def _check_exponential(model: RiskModel) -> None:
    if not hasattr(model.claims, "alpha"):
        raise ModelInvalid("numeric solver requires exponential claims", key="claims.type")


def solve_psi1(model: RiskModel, settings: SolveSettings) -> GridFunction:
    """Increasing solution of the zero-dividend equation, normalised to ``psi(0) = 1``."""
    _check_exponential(model)
    xs = np.linspace(0.0, settings.x_max, settings.n_steps + 1)
    f = _rhs(model, 0.0)
    g0 = float(model.g(0.0))
    ys, dys = _integrate(f, xs, 1.0, (model.lam + model.delta) / g0, settings.ode_tol, "psi1")
    bad = np.nonzero(dys <= 0)[0]
    if bad.size:
        x_bad = float(xs[bad[0]])
        raise HypothesisViolation(f"psi1 is not strictly increasing (psi1' <= 0 at x={x_bad:.6g})",
                                  module="numsolve", x=x_bad)
    return GridFunction(xs, ys, dys, f(xs, ys, dys))


def _negative_root(a: float, b: float, c: float) -> float:
    disc = b * b - 4 * a * c
    if a <= 0 or disc < 0:
        raise NumericFailure("frozen-coefficient quadratic has no negative root", module="numsolve")
    lo, hi = closedform._quadratic_roots(a, b, c)
    if not lo < 0:
        raise NumericFailure("frozen-coefficient quadratic has no negative root", module="numsolve")
    return lo


def solve_psi2(model: RiskModel, u0: float, settings: SolveSettings) -> GridFunction:
    """Bounded concave solution of the max-rate equation, normalised to ``phi(x_max) = -1``."""
    _check_exponential(model)
    xs = np.linspace(0.0, settings.x_max, settings.n_steps + 1)
    if not np.all(model.g(xs) > u0):
        raise ModelInvalid(f"u0={u0} must stay below the drift g(x) on [0, x_max]", key="u0")
    G = float(model.g(xs[-1])) - u0
    t_loc = _negative_root(G, model.alpha * G + float(model.dg(xs[-1])) - (model.lam + model.delta),
                           -model.alpha * model.delta)
    f = _rhs(model, u0)
    back = xs[::-1]
    ys, dys = _integrate(f, back, -1.0, -t_loc, settings.ode_tol, "psi2")
    ys, dys = ys[::-1], dys[::-1]
    curvs = f(xs, ys, dys)
    if np.any(ys >= 0):
        x_bad = float(xs[np.argmax(ys >= 0)])
        raise HypothesisViolation(f"psi2 is not negative at x={x_bad:.6g}", module="numsolve", x=x_bad)
    scale = np.max(np.abs(curvs))
    if np.any(curvs > 1e-8 * max(scale, 1.0)):
        x_bad = float(xs[np.argmax(curvs > 1e-8 * max(scale, 1.0))])
        raise HypothesisViolation(f"psi2 is not concave at x={x_bad:.6g}", module="numsolve", x=x_bad)
    return GridFunction(xs, ys, dys, curvs)


def solve_psi(model: RiskModel, settings: SolveSettings) -> GridFunction:
    """Increasing solution used by the unrestricted scheme (same equation as psi1)."""
    return solve_psi1(model, settings)


# --------------------------------------------------------------------------
# free boundaries


def _threshold_gap(psi1: GridFunction, psi2: GridFunction, u0: float, delta: float):
    def F(x):
        return psi1.value(x) / psi1.deriv(x) - psi2.value(x) / psi2.deriv(x) - u0 / delta
    return F


def find_threshold(psi1: GridFunction, psi2: GridFunction, u0: float, delta: float,
                   settings: SolveSettings) -> float | None:
    """Smallest root of ``psi1/psi1' - psi2/psi2' - u0/delta`` on ``(0, x_max]``, or None."""
    if len(psi1.xs) != len(psi2.xs) or np.any(psi1.xs != psi2.xs):
        raise ModelInvalid("psi1 and psi2 must share abscissae")
    F = _threshold_gap(psi1, psi2, u0, delta)
    vals = F(psi1.xs)
    sign = np.sign(vals)
    changes = np.nonzero(sign[1:] * sign[:-1] < 0)[0]
    zeros = np.nonzero(vals[1:] == 0.0)[0]
    if changes.size == 0 and zeros.size == 0:
        return None
    candidates = sorted(set(changes.tolist()) | set(zeros.tolist()))
    if len(candidates) > 1:
        warnings.warn(f"threshold equation has {len(candidates)} roots; taking the smallest",
                      NonUniquenessWarning, stacklevel=2)
    i = candidates[0]
    a, b = float(psi1.xs[i]), float(psi1.xs[i + 1])
    if vals[i + 1] == 0.0:
        return b
    return float(optimize.bisect(F, a, b, xtol=settings.root_tol, maxiter=200))


def find_barrier(psi: GridFunction, settings: SolveSettings) -> float | None:
    """Minimiser of ``psi'``, or None when it sits at the left end."""
    if len(psi.xs) < 100:
        raise ModelInvalid("barrier search needs at least 100 grid points")
    d = psi.derivs
    i = int(np.argmin(d))
    if i == len(d) - 1:
        raise XMaxTooSmall(f"psi' is minimised at x_max={psi.x_max:.6g}; enlarge the domain", module="numsolve")
    if i == 0:
        return None
    lo, hi = float(psi.xs[i - 1]), float(psi.xs[i + 1])
    res = optimize.minimize_scalar(psi.deriv, bracket=(lo, float(psi.xs[i]), hi), method="golden",
                                   tol=settings.root_tol / max(hi, 1.0),
                                   options={"maxiter": 500})
    b = float(res.x)
    if b <= 0:
        return None
    right = d[i + 1:]
    slack = 1e-10 * max(np.max(np.abs(d)), 1.0)
    drops = np.nonzero(np.diff(right) < -slack)[0]
    if drops.size:
        x_bad = float(psi.xs[i + 1 + drops[0]])
        raise HypothesisViolation(f"psi' decreases to the right of b (at x={x_bad:.6g})",
                                  module="numsolve", x=x_bad)
    return b


# --------------------------------------------------------------------------
# assembled value functions


@dataclass(frozen=True)
class _Segment:
    lo: float
    hi: float
    grid: GridFunction | None = None
    scale: float = 0.0
    offset: float = 0.0
    slope: float = 0.0  # affine segments: offset + slope * x


@dataclass(frozen=True, eq=False)
class GridValue:
    """A value function spliced from grid interpolants and affine tails."""

    scheme: str
    regime: str
    parameter: float | None
    segments: tuple[_Segment, ...]
    x_max: float

    @property
    def knot(self) -> float | None:
        return self.parameter

    def _apply(self, x, order: int):
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa)
        out = np.zeros_like(flat)
        for k, seg in enumerate(self.segments):
            last = k == len(self.segments) - 1
            mask = (flat >= seg.lo) & ((flat < seg.hi) | last)
            if not mask.any():
                continue
            z = flat[mask]
            if seg.grid is not None:
                g = seg.grid.value(z) if order == 0 else seg.grid.deriv(z)
                out[mask] = (seg.offset if order == 0 else 0.0) + seg.scale * g
            else:
                out[mask] = seg.offset + seg.slope * z if order == 0 else seg.slope
        out[flat < 0] = 0.0
        return float(out[0]) if xa.ndim == 0 else out

    def value(self, x):
        return self._apply(x, 0)

    def deriv(self, x):
        return self._apply(x, 1)

    __call__ = value

    def claim_integral(self, model: RiskModel, x: float) -> float:
        """``lam int_0^x V(z) alpha e^{-alpha (x - z)} dz`` piece by piece."""
        if x <= 0:
            return 0.0
        alpha = model.alpha
        total = 0.0
        for seg in self.segments:
            a, b = seg.lo, min(seg.hi, x)
            if b <= a:
                break
            ea, eb = math.exp(-alpha * (x - a)), math.exp(-alpha * (x - b))
            if seg.grid is not None:
                total += seg.offset * (eb - ea) + seg.scale * seg.grid.weighted_integral(a, b, x, alpha)
            else:
                # int (offset + slope z) alpha e^{-alpha(x-z)} dz
                total += seg.offset * (eb - ea) + seg.slope * ((b - 1 / alpha) * eb - (a - 1 / alpha) * ea)
        return model.lam * total

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "regime": self.regime, "parameter": self.parameter, "roots": None}


def assemble_restricted(psi1: GridFunction, psi2: GridFunction, d: float | None, u0: float,
                        delta: float, model: RiskModel | None = None) -> GridValue:
    """Splice ``psi1/psi1'(d)`` below ``d`` with ``u0/delta + psi2/psi2'(d)`` above.

    With ``d`` None the max rate is paid everywhere and the scale of psi2 is
    fixed by the equation at ``x = 0`` (needs ``model``).
    """
    x_max = psi1.x_max
    if d is None:
        if model is None:
            raise ModelInvalid("the pay-max regime needs the model to fix the boundary scale")
        lam = model.lam
        denom = (float(model.g(0.0)) - u0) * psi2.derivs[0] - (lam + delta) * psi2.values[0]
        K = (lam * u0 / delta) / denom
        if not psi2.derivs[0] * K > 0:
            raise HypothesisViolation("pay-max value is not increasing at 0", module="numsolve", x=0.0)
        return GridValue("restricted", "paymax", None, (_Segment(0.0, x_max, psi2, K, u0 / delta),), x_max)
    if not 0 < d < x_max:
        raise ModelInvalid(f"threshold d={d} outside the grid")
    k1, k2 = float(psi1.deriv(d)), float(psi2.deriv(d))
    if k1 <= 0 or k2 <= 0:
        raise HypothesisViolation(f"non-positive slope at the threshold d={d:.6g}", module="numsolve", x=d)
    if np.any(np.diff(psi1.derivs[psi1.xs < d]) > 1e-12 * np.max(np.abs(psi1.derivs))):
        warnings.warn(f"psi1 is not concave on (0, d={d:.6g})", RuntimeWarning, stacklevel=2)
    segs = (_Segment(0.0, d, psi1, 1.0 / k1, 0.0), _Segment(d, x_max, psi2, 1.0 / k2, u0 / delta))
    return GridValue("restricted", "threshold", d, segs, x_max)


def assemble_unrestricted(psi: GridFunction, b: float | None, model: RiskModel | None = None) -> GridValue:
    """Splice ``psi/psi'(b)`` below ``b`` with the unit-slope tail above."""
    x_max = psi.x_max
    if b is None:
        if model is None:
            raise ModelInvalid("the pay-all regime needs the model for its value")
        c0 = float(model.g(0.0))
        return GridValue("unrestricted", "payall", None,
                         (_Segment(0.0, math.inf, None, 0.0, c0 / (model.lam + model.delta), 1.0),), x_max)
    if not 0 < b < x_max:
        raise ModelInvalid(f"barrier b={b} outside the grid")
    k = float(psi.deriv(b))
    if k <= 0:
        raise HypothesisViolation(f"non-positive slope at the barrier b={b:.6g}", module="numsolve", x=b)
    level = float(psi.value(b)) / k
    segs = (_Segment(0.0, b, psi, 1.0 / k, 0.0), _Segment(b, math.inf, None, 0.0, level - b, 1.0))
    return GridValue("unrestricted", "barrier", b, segs, x_max)


def solve_restricted(model: RiskModel, u0: float, settings: SolveSettings) -> GridValue:
    psi1 = solve_psi1(model, settings)
    psi2 = solve_psi2(model, u0, settings)
    d = find_threshold(psi1, psi2, u0, model.delta, settings)
    return assemble_restricted(psi1, psi2, d, u0, model.delta, model)


def solve_unrestricted(model: RiskModel, settings: SolveSettings) -> GridValue:
    psi = solve_psi(model, settings)
    b = find_barrier(psi, settings)
    return assemble_unrestricted(psi, b, model)
