from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdcp import closedform as cf
from pdcp import numsolve as ns
from pdcp import verify as vf

D, B = 6.291707709660961, 7.004651043529306
GRID = np.linspace(0, 20, 400)


@pytest.fixture(scope="module")
def VR(example_model):
    return cf.restricted_value(example_model, 3.0)


@pytest.fixture(scope="module")
def V(example_model):
    return cf.unrestricted_value(example_model)


def test_claim_integral_trivial_cases(example_model):
    const = vf.FunctionCandidate(lambda x: 2.0, lambda x: 0.0)
    assert vf.claim_integral(const, example_model, 1.5) == pytest.approx(2 * 2.0 * (1 - np.exp(-1.5)), rel=1e-12)
    assert vf.claim_integral(const, example_model, 0.0) == 0.0


def test_claim_integral_exact_vs_quad(example_model, VR):
    exact = vf.claim_integral(VR, example_model, 3.0, method="exact")
    quad = vf.claim_integral(VR, example_model, 3.0, method="quad")
    assert exact == pytest.approx(quad, rel=1e-9)


@pytest.mark.parametrize("x", [1.0, 4.0, D, 8.0, 15.0])
def test_hjb_residual_points(example_model, VR, x):
    assert abs(vf.hjb_residual(VR, example_model, 3.0, x)) <= 1e-6


def test_zero_function_is_not_a_solution(example_model):
    zero = vf.FunctionCandidate(lambda x: 0.0, lambda x: 0.0)
    assert vf.hjb_residual(zero, example_model, 3.0, 2.0) == 3.0


def test_hjb_report_structure(example_model, VR):
    rep = vf.hjb_report(VR, example_model, 3.0, GRID)
    assert rep.passed and rep.structure_ok and rep.max_abs <= 1e-6
    arg = rep.extra["maximiser"]
    assert np.all(arg[GRID < D] == 0.0) and np.all(arg[GRID > D] == 3.0)


def test_hjb_report_quadrature_path(example_model, VR):
    plain = vf.FunctionCandidate(VR.value, VR.deriv, VR.knot)
    rep = vf.hjb_report(plain, example_model, 3.0, np.linspace(0, 20, 41))
    assert rep.passed and rep.structure_ok


@pytest.mark.parametrize("x", [1.0, 4.0, B - 0.1])
def test_qvi_continuation_region(example_model, V, x):
    t1, t2, mx = vf.qvi_terms(V, example_model, x)
    assert abs(t1) <= 1e-6 and t2 < 0 and mx == max(t1, t2)


def test_qvi_beyond_barrier(example_model, V):
    t1, t2, _ = vf.qvi_terms(V, example_model, B + 2)
    assert t2 == 0.0 and t1 <= 1e-6


def test_qvi_degenerate_solution(degenerate_model):
    V = cf.unrestricted_value(degenerate_model)
    for x in (0.5, 1.0, 3.0, 10.0):
        t1, t2, mx = vf.qvi_terms(V, degenerate_model, x)
        assert t2 == 0.0 and mx <= 1e-8 and t1 <= 0


def test_qvi_report(example_model, V):
    rep = vf.qvi_report(V, example_model, GRID)
    assert rep.grid[0] > 0 and rep.passed and rep.structure_ok


def test_property_suite(example_model, VR, V):
    rep = vf.property_suite(VR, V, example_model, 3.0, GRID)
    assert rep.passed
    assert [i.name for i in rep.items] == ["bounds", "nondecreasing", "increment", "dominance", "smooth_fit"]
    assert np.max(VR.value(GRID)) <= 30.0


def test_property_suite_catches_scaled_candidate(example_model, VR, V):
    rep = vf.property_suite(VR, vf.Scaled(V, 1.5), example_model, 3.0, GRID)
    item = rep["smooth_fit"]
    assert not item.passed and item.worst_x == pytest.approx(B)


def test_mutation_is_detected(example_model, VR, V):
    hjb = vf.hjb_report(vf.Scaled(VR, 1 + 1e-3), example_model, 3.0, GRID)
    qvi = vf.qvi_report(vf.Scaled(V, 1 + 1e-3), example_model, GRID)
    assert hjb.max_abs > 10 * vf.RESIDUAL_TOL and qvi.max_abs > 10 * vf.RESIDUAL_TOL


def test_bounds_item_fails_above_limit(VR):
    assert not vf.bound_item(vf.Scaled(VR, 2.0), 3.0, 0.1, GRID).passed


def test_increment_item_detects_flat_stretch():
    xs = np.linspace(0, 5, 51)
    flat = vf.FunctionCandidate(lambda x: np.minimum(x, 2.0), lambda x: (x < 2).astype(float))
    item = vf.increment_item(flat, xs)
    assert not item.passed and item.worst_x == pytest.approx(5.0)


@settings(max_examples=300, deadline=None)
@given(dV=st.floats(-5, 5), base=st.floats(-50, 50), u0=st.floats(0.0, 10))
def test_endpoint_sup_reduction(dV, base, u0):
    assert vf.endpoint_sup_gap(dV, base, u0) == 0.0


@pytest.mark.parametrize("x", [0.5, 3.0, 6.0, 9.0, 18.0])
def test_gradient_cross_check(example_model, VR, V, x):
    for cand in (VR, V):
        assert vf.finite_difference_deriv(cand, x) == pytest.approx(cand.deriv(x), rel=1e-5)


def test_numeric_candidate_uses_stored_derivatives(interest_model):
    s = ns.default_settings(interest_model, cover=20.0)
    VR = ns.solve_restricted(interest_model, 3.0, s)
    rep = vf.hjb_report(VR, interest_model, 3.0, np.linspace(0, 20, 101), tol=1e-5)
    assert rep.passed and rep.structure_ok


def test_report_serialisation(tmp_path, example_model, VR):
    rep = vf.hjb_report(VR, example_model, 3.0, np.linspace(0, 10, 11))
    data = json.loads(rep.to_json())
    assert data["passed"] and data["n"] == 11
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "x,residual" and len(lines) == 12
