"""Exact event-driven simulation of dividend strategies.

Between claims the controlled surplus follows a closed-form flow, so paths are
simulated claim to claim with no time grid. Discounted dividends are
accumulated per segment in closed form and paths stop at ruin or once the
discount factor drops below ``eps_cut``; the value left on the table at that
point is bounded and reported, never absorbed.

Randomness: path ``i`` draws from a Philox stream keyed by ``(seed, i)``, so an
estimate does not depend on how paths are split across workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ModelInvalid
from .riskmodel import DriftField, RiskModel, SurplusEvent, SurplusPath, flow, flow_hit_time

CHUNK = 4096
_BLOCK = 128  # claim pairs drawn per stream refill


# --------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class Threshold:
    d: float
    u0: float


@dataclass(frozen=True)
class Barrier:
    b: float


@dataclass(frozen=True)
class ConstantRate:
    u: float


@dataclass(frozen=True)
class NoDividends:
    pass


StrategySpec = Threshold | Barrier | ConstantRate | NoDividends


def validate_strategy(model: RiskModel, strategy: StrategySpec) -> None:
    g0 = float(model.g(0.0))
    if isinstance(strategy, Threshold):
        if not (strategy.d >= 0 and strategy.u0 > 0):
            raise ModelInvalid(f"threshold strategy needs d >= 0 and u0 > 0, got {strategy}", key="strategy")
        if not strategy.u0 < g0:
            raise ModelInvalid(f"u0={strategy.u0} must be below inf g = {g0}", key="u0")
    elif isinstance(strategy, Barrier):
        if not strategy.b >= 0:
            raise ModelInvalid(f"barrier must be >= 0, got {strategy.b}", key="strategy")
    elif isinstance(strategy, ConstantRate):
        if not 0 <= strategy.u < g0:
            raise ModelInvalid(f"constant rate u={strategy.u} must lie in [0, inf g = {g0})", key="strategy")
    elif not isinstance(strategy, NoDividends):
        raise ModelInvalid(f"unknown strategy {strategy!r}", key="strategy")


def parse_strategy(text: str) -> StrategySpec:
    """Parse ``threshold:d=..,u0=..``, ``barrier:b=..``, ``rate:u=..`` or ``none``."""
    text = text.strip()
    if text == "none":
        return NoDividends()
    kind, _, rest = text.partition(":")
    try:
        params = dict(item.split("=", 1) for item in rest.split(",")) if rest else {}
        params = {k.strip(): float(v) for k, v in params.items()}
    except ValueError as exc:
        raise ValueError(f"cannot parse strategy {text!r}") from exc
    expected = {"threshold": {"d", "u0"}, "barrier": {"b"}, "rate": {"u"}}
    if kind not in expected or set(params) != expected[kind]:
        raise ValueError(f"cannot parse strategy {text!r}")
    if not all(math.isfinite(v) for v in params.values()):
        raise ValueError(f"non-finite parameter in strategy {text!r}")
    if kind == "threshold":
        return Threshold(params["d"], params["u0"])
    if kind == "barrier":
        return Barrier(params["b"])
    return ConstantRate(params["u"])


def strategy_to_str(strategy: StrategySpec) -> str:
    if isinstance(strategy, Threshold):
        return f"threshold:d={strategy.d!r},u0={strategy.u0!r}"
    if isinstance(strategy, Barrier):
        return f"barrier:b={strategy.b!r}"
    if isinstance(strategy, ConstantRate):
        return f"rate:u={strategy.u!r}"
    return "none"


def value_bound(model: RiskModel, strategy: StrategySpec) -> float:
    """Upper bound on the value of continuing a path from any reachable state."""
    delta = model.delta
    if isinstance(strategy, Threshold):
        return strategy.u0 / delta
    if isinstance(strategy, ConstantRate):
        return strategy.u / delta
    if isinstance(strategy, Barrier):
        return strategy.b + float(model.g(strategy.b)) / delta
    return 0.0


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SimConfig:
    seed: int = 20240607
    n_paths: int = 100_000
    eps_cut: float = 1e-8
    x0: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ModelInvalid("seed must be a 64-bit unsigned integer", key="seed")
        if self.n_paths < 1:
            raise ModelInvalid("n_paths must be >= 1", key="paths")
        if not 0 < self.eps_cut < 1:
            raise ModelInvalid("eps_cut must lie in (0, 1)", key="eps_cut")
        if not (math.isfinite(self.x0) and self.x0 >= 0):
            raise ModelInvalid("x0 must be finite and >= 0", key="x0")
        if self.workers < 1:
            raise ModelInvalid("workers must be >= 1", key="workers")

    def horizon(self, delta: float) -> float:
        return -math.log(self.eps_cut) / delta


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    stderr: float
    n_paths: int
    truncation_bound: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n_paths,
                "truncation_bound": self.truncation_bound}


# --------------------------------------------------------------------------
# random streams


def _stream(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) | path_index))


class _PathStream:
    """Consumes (inter-arrival, claim) pairs of Exp(1) variates from one path's stream."""

    def __init__(self, seed: int, path_index: int) -> None:
        self._gen = _stream(seed, path_index)
        self._buf = np.empty((0, 2))
        self._pos = 0

    def next_pair(self) -> tuple[float, float]:
        if self._pos == len(self._buf):
            self._buf = self._gen.standard_exponential(2 * _BLOCK).reshape(_BLOCK, 2)
            self._pos = 0
        w, y = self._buf[self._pos]
        self._pos += 1
        return float(w), float(y)


# --------------------------------------------------------------------------
# single path


def _disc(delta: float, t1: float, t2: float) -> float:
    """``int_{t1}^{t2} e^{-delta s} ds``."""
    return math.exp(-delta * t1) * -math.expm1(-delta * (t2 - t1)) / delta


def simulate_path(model: RiskModel, strategy: StrategySpec, config: SimConfig,
                  path_index: int = 0) -> SurplusPath:
    """Simulate one controlled path claim by claim and record its events."""
    validate_strategy(model, strategy)
    delta, lam = model.delta, model.lam
    drift = model.drift
    t_end = config.horizon(delta)
    stream = _PathStream(config.seed, path_index)
    events: list[SurplusEvent] = []
    x, t, pv = float(config.x0), 0.0, 0.0

    def emit(kind: str, when: float, amount: float, surplus: float) -> None:
        if events and when <= events[-1].t:
            return  # segment starts coinciding with a recorded event carry no new information
        events.append(SurplusEvent(when, kind, amount, surplus))

    if isinstance(strategy, Barrier) and x > strategy.b:
        lump = x - strategy.b
        assert lump <= x, "lump dividend exceeds surplus"
        pv += lump
        x = strategy.b
        events.append(SurplusEvent(0.0, "lump", lump, x))

    while True:
        w, e = stream.next_pair()
        t_next = t + w / lam
        t_stop = min(t_next, t_end)
        x, pv = _advance(strategy, drift, x, t, t_stop, pv, delta, emit)
        t = t_stop
        if t_next >= t_end:
            bound = math.exp(-delta * t_end) * value_bound(model, strategy)
            return SurplusPath(events, pv, None, bound)
        claim = float(model.claims.sample(e))
        x -= claim
        if x < 0:
            events.append(SurplusEvent(t, "ruin", claim, x))
            return SurplusPath(events, pv, t, 0.0)
        events.append(SurplusEvent(t, "claim", claim, x))


def _advance(strategy, drift: DriftField, x: float, t: float, t_stop: float, pv: float,
             delta: float, emit) -> tuple[float, float]:
    """Propagate the controlled flow on ``[t, t_stop]`` (no claims) and add discounted dividends."""
    if isinstance(strategy, NoDividends):
        return float(flow(drift, x, t_stop - t)), pv
    if isinstance(strategy, ConstantRate):
        if t == 0.0 and strategy.u > 0:
            emit("rate_start", 0.0, strategy.u, x)
        return float(flow(drift.shifted(strategy.u), x, t_stop - t)), pv + strategy.u * _disc(delta, t, t_stop)
    if isinstance(strategy, Threshold):
        d, u0 = strategy.d, strategy.u0
        t1 = t
        if x < d:
            t1 = t + float(flow_hit_time(drift, x, d))
            if t1 >= t_stop:
                return float(flow(drift, x, t_stop - t)), pv
            x = d
        emit("rate_start", t1, u0, x)
        return float(flow(drift.shifted(u0), x, t_stop - t1)), pv + u0 * _disc(delta, t1, t_stop)
    b = strategy.b
    t1 = t
    if x < b:
        t1 = t + float(flow_hit_time(drift, x, b))
        if t1 >= t_stop:
            return float(flow(drift, x, t_stop - t)), pv
    rate = float(drift.g(b))
    emit("barrier", t1, rate, b)
    return b, pv + rate * _disc(delta, t1, t_stop)


# --------------------------------------------------------------------------
# vectorised batch


def _flow_vec(drift: DriftField, x, dt):
    return flow(drift, x, dt)


def _simulate_chunk(model: RiskModel, strategy: StrategySpec, config: SimConfig,
                    start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    """Discounted dividends and truncation bounds for paths ``start..stop-1``."""
    n = stop - start
    delta, lam = model.delta, model.lam
    drift = model.drift
    t_end = config.horizon(delta)
    gens = [_stream(config.seed, i) for i in range(start, stop)]
    x = np.full(n, float(config.x0))
    t = np.zeros(n)
    pv = np.zeros(n)
    trunc = np.zeros(n)
    alive = np.arange(n)

    if isinstance(strategy, Barrier):
        over = x > strategy.b
        pv[over] += x[over] - strategy.b
        x[over] = strategy.b

    bound = value_bound(model, strategy)
    while alive.size:
        block = np.stack([gens[i].standard_exponential(2 * _BLOCK) for i in alive]).reshape(alive.size, _BLOCK, 2)
        xa, ta, pa = x[alive], t[alive], pv[alive]
        live = np.ones(alive.size, dtype=bool)
        for k in range(_BLOCK):
            idx = np.nonzero(live)[0]
            if idx.size == 0:
                break
            xs, ts, ps = xa[idx], ta[idx], pa[idx]
            t_next = ts + block[idx, k, 0] / lam
            t_stop = np.minimum(t_next, t_end)
            xs, ps = _advance_vec(strategy, drift, xs, ts, t_stop, ps, delta)
            ts = t_stop
            done = t_next >= t_end
            xs = np.where(done, xs, xs - model.claims.sample(block[idx, k, 1]))
            ruined = ~done & (xs < 0)
            xa[idx], ta[idx], pa[idx] = xs, ts, ps
            stopped = idx[done | ruined]
            live[stopped] = False
            trunc[alive[idx[done]]] = math.exp(-delta * t_end) * bound
        x[alive], t[alive], pv[alive] = xa, ta, pa
        alive = alive[live]
    return pv, trunc


def _disc_vec(delta: float, t1, t2):
    return np.exp(-delta * t1) * -np.expm1(-delta * (t2 - t1)) / delta


def _advance_vec(strategy, drift: DriftField, x, t, t_stop, pv, delta):
    if isinstance(strategy, NoDividends):
        return _flow_vec(drift, x, t_stop - t), pv
    if isinstance(strategy, ConstantRate):
        return (_flow_vec(drift.shifted(strategy.u), x, t_stop - t),
                pv + strategy.u * _disc_vec(delta, t, t_stop))
    if isinstance(strategy, Threshold):
        d, u0 = strategy.d, strategy.u0
        below = x < d
        t1 = np.where(below, t + flow_hit_time(drift, np.minimum(x, d), d), t)
        reach = t1 < t_stop
        x_free = _flow_vec(drift, x, t_stop - t)
        x_paid = _flow_vec(drift.shifted(u0), np.where(below, d, x), np.maximum(t_stop - t1, 0.0))
        new_x = np.where(below & ~reach, x_free, x_paid)
        gain = np.where(reach, u0 * _disc_vec(delta, t1, np.maximum(t_stop, t1)), 0.0)
        return new_x, pv + gain
    b = strategy.b
    rate = float(drift.g(b))
    below = x < b
    t1 = np.where(below, t + flow_hit_time(drift, np.minimum(x, b), b), t)
    reach = t1 < t_stop
    new_x = np.where(reach, b, _flow_vec(drift, x, t_stop - t))
    gain = np.where(reach, rate * _disc_vec(delta, t1, np.maximum(t_stop, t1)), 0.0)
    return new_x, pv + gain


def path_values(model: RiskModel, strategy: StrategySpec, config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-path discounted dividends and truncation bounds, in path order."""
    validate_strategy(model, strategy)
    if isinstance(strategy, NoDividends):
        return np.zeros(config.n_paths), np.zeros(config.n_paths)
    bounds = [(s, min(s + CHUNK, config.n_paths)) for s in range(0, config.n_paths, CHUNK)]
    if config.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(lambda ab: _simulate_chunk(model, strategy, config, *ab), bounds))
    else:
        parts = [_simulate_chunk(model, strategy, config, a, b) for a, b in bounds]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _summarise(values: np.ndarray, trunc: np.ndarray) -> ValueEstimate:
    n = len(values)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ValueEstimate(mean, stderr, n, float(np.mean(trunc)))


def estimate_value(model: RiskModel, strategy: StrategySpec, config: SimConfig) -> ValueEstimate:
    """Monte Carlo estimate of the expected discounted dividends up to ruin."""
    return _summarise(*path_values(model, strategy, config))


@dataclass(frozen=True)
class ScanRow:
    parameter: float
    estimate: ValueEstimate


def policy_suboptimality_scan(model: RiskModel, x0: float, config: SimConfig,
                              grid: Sequence[float], family: str = "threshold",
                              u0: float | None = None) -> list[ScanRow]:
    """Estimate the value of each strategy in a one-parameter family with common random numbers."""
    cfg = SimConfig(config.seed, config.n_paths, config.eps_cut, x0, config.workers)
    rows = []
    for p in grid:
        if family == "threshold":
            if u0 is None:
                raise ModelInvalid("threshold scans need u0", key="u0")
            strategy: StrategySpec = Threshold(float(p), u0)
        elif family == "barrier":
            strategy = Barrier(float(p))
        else:
            raise ModelInvalid(f"unknown strategy family {family!r}", key="family")
        rows.append(ScanRow(float(p), estimate_value(model, strategy, cfg)))
    return rows


def trace_lines(path: SurplusPath) -> Iterator[str]:
    """JSON lines for the claim, lump and ruin events of a path."""
    for ev in path.events:
        if ev.kind in ("claim", "lump", "ruin"):
            yield json.dumps({"t": ev.t, "kind": ev.kind, "amount": ev.amount, "surplus": ev.surplus})


def simulate_paths(model: RiskModel, strategy: StrategySpec, config: SimConfig,
                   indices: Iterable[int]) -> Iterator[SurplusPath]:
    for i in indices:
        yield simulate_path(model, strategy, config, i)
