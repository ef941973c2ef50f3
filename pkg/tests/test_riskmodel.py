from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import make_model
from oracles import dpsi1, psi1, roots_oracle
from pdcp.errors import ModelInvalid
from pdcp.riskmodel import (
    ConstantDrift,
    LinearDrift,
    claim_expectation,
    flow,
    flow_hit_time,
    generator_apply,
    model_from_dict,
)

drifts = st.one_of(
    st.builds(ConstantDrift, st.floats(0.1, 10)),
    st.builds(LinearDrift, st.floats(0.0, 0.2), st.floats(0.1, 10)),
)


def test_linear_flow_matches_rk4_oracle():
    sol = solve_ivp(lambda t, y: 0.05 * y + 1.0, (0, 10), [0.0], method="RK45", rtol=1e-12, atol=1e-12)
    oracle = sol.y[0, -1]
    assert oracle == pytest.approx(20 * (math.exp(0.5) - 1), rel=1e-10)
    assert flow(LinearDrift(0.05, 1.0), 0.0, 10.0) == pytest.approx(oracle, rel=1e-10)
    assert flow(LinearDrift(0.05, 1.0), 0.0, 10.0) == pytest.approx(12.974, abs=1e-3)


def test_flow_simple_cases():
    assert flow(ConstantDrift(4.0), 1.0, 2.0) == 9.0
    assert flow(LinearDrift(0.05, 1.0), 5.0, 0.0) == 5.0
    assert flow_hit_time(ConstantDrift(4.0), 2.0, 10.0) == 2.0
    assert flow_hit_time(LinearDrift(0.05, 1.0), 3.0, 3.0) == 0.0
    assert flow_hit_time(LinearDrift(0.05, 1.0), 0.0, 20 * (math.exp(0.5) - 1)) == pytest.approx(10.0, rel=1e-12)


def test_flow_solves_its_ode():
    d = LinearDrift(0.05, 1.0)
    x, t, h = 2.0, 3.0, 1e-5
    slope = (flow(d, x, t + h) - flow(d, x, t - h)) / (2 * h)
    assert slope == pytest.approx(d.g(flow(d, x, t)), rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(drifts, st.floats(0, 50), st.floats(0, 20), st.floats(0, 20))
def test_flow_semigroup(d, x, s, t):
    assert flow(d, flow(d, x, s), t) == pytest.approx(flow(d, x, s + t), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(drifts, st.floats(0, 50), st.floats(0, 50), st.floats(0, 20))
def test_flow_monotone(d, x, dx, t):
    assert flow(d, x + dx, t) >= flow(d, x, t)
    assert flow(d, x, t + dx) >= flow(d, x, t)


@settings(max_examples=200, deadline=None)
@given(drifts, st.floats(0, 50), st.floats(0, 100))
def test_hit_time_is_right_inverse(d, x, gap):
    y = x + gap
    assert flow(d, x, flow_hit_time(d, x, y)) == pytest.approx(y, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("x", [0.0, 0.5, 3.0, 12.0])
def test_generator_on_constants(example_model, x):
    K = 2.5
    got = generator_apply(example_model, lambda y: K, lambda y: 0.0, x)
    assert got == pytest.approx(-example_model.lam * K * math.exp(-x), rel=1e-10, abs=1e-14)
    assert generator_apply(example_model, lambda y: 0.0, lambda y: 0.0, x) == 0.0


@pytest.mark.parametrize("x", [1.0, 5.0, 10.0])
def test_generator_on_psi1_is_delta_psi1(example_model, x):
    r, s, _ = roots_oracle(4, 3, 2, 0.1, 1)
    h = lambda y: psi1(r, s, 1.0, y)
    dh = lambda y: dpsi1(r, s, 1.0, y)
    assert abs(generator_apply(example_model, h, dh, x) - 0.1 * h(x)) <= 1e-8


def test_claim_expectation_of_constant():
    m = make_model(alpha=2.0)
    assert claim_expectation(m, lambda y: 3.0, 1.5) == pytest.approx(3 * (1 - math.exp(-3.0)), rel=1e-12)
    assert claim_expectation(m, lambda y: 3.0, 0.0) == 0.0


EXAMPLE_JSON = {"drift": {"type": "constant", "c": 4.0}, "lambda": 2.0, "delta": 0.1,
                "claims": {"type": "exponential", "alpha": 1.0}}


def test_model_json_round_trip():
    m = model_from_dict(EXAMPLE_JSON)
    assert (m.drift.c, m.lam, m.delta, m.alpha) == (4.0, 2.0, 0.1, 1.0)
    assert model_from_dict(m.to_dict()) == m
    lin = model_from_dict({**EXAMPLE_JSON, "drift": {"type": "linear", "rho": 0.05, "c": 1.0}})
    assert lin.g(np.array([0.0, 20.0])) == pytest.approx([1.0, 2.0])


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["drift"].update(c=float("inf")), "drift.c"),
    (lambda d: d["drift"].update(c=-1.0), "drift.c"),
    (lambda d: d["drift"].update(rate=1.0), "drift.rate"),
    (lambda d: d["claims"].update(alpha="one"), "claims.alpha"),
    (lambda d: d.pop("lambda"), "lambda"),
    (lambda d: d.update(delta=0.0), "delta"),
    (lambda d: d["drift"].update(type="cubic"), "drift.type"),
])
def test_model_json_rejects_bad_input(mutate, key):
    d = {k: dict(v) if isinstance(v, dict) else v for k, v in EXAMPLE_JSON.items()}
    mutate(d)
    with pytest.raises(ModelInvalid) as info:
        model_from_dict(d)
    assert key in str(info.value)
