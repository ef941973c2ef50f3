"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from conftest import make_model, record_acceptance
from oracles import barrier_oracle, roots_oracle, threshold_oracle
from pdcp import cli
from pdcp import closedform as cf
from pdcp import montecarlo as mc
from pdcp import numsolve as ns
from pdcp import verify as vf

U0 = 3.0
MC = dict(seed=20240607, n_paths=100_000, eps_cut=1e-8)


@pytest.fixture(scope="module")
def model():
    return make_model()


@pytest.fixture(scope="module")
def solutions(model):
    return cf.restricted_value(model, U0), cf.unrestricted_value(model)


def _check(number, passed, detail):
    record_acceptance(number, passed, detail)
    assert passed, detail


def test_criterion_1_example_constants(model, solutions):
    start = time.perf_counter()
    roots = cf.char_roots(4.0, U0, 2.0, 0.1, 1.0)
    d, b = cf.threshold_d(roots), cf.barrier_b(roots, 1.0)
    elapsed = time.perf_counter() - start
    r, s, t = roots_oracle(4, 3, 2, 0.1, 1)
    oracle = {"r": r, "s": s, "t": t, "d": threshold_oracle(4, 3, 2, 0.1, 1), "b": barrier_oracle(4, 2, 0.1, 1)}
    got = {"r": roots.r, "s": roots.s, "t": roots.t, "d": d, "b": b}
    err = max(abs(got[k] - oracle[k]) for k in got)
    printed = {"r": 0.047818, "s": -0.522818, "t": -0.084429, "d": 6.2918, "b": 7.0047}
    rounding = max(abs(got[k] - printed[k]) for k in got)
    _check(1, err <= 1e-6 and rounding <= 1e-4 and elapsed < 0.1,
           f"max |impl - oracle| = {err:.2e}, d = {d:.6f}, b = {b:.6f}, {elapsed * 1e3:.2f} ms")


def _mc_sweep(model, strategy_for, exact, x0s):
    rows = []
    for x0 in x0s:
        est = mc.estimate_value(model, strategy_for(), mc.SimConfig(**MC, x0=x0))
        z = (est.mean - exact(x0)) / est.stderr
        rows.append((x0, z))
    return rows


def test_criterion_2_mc_restricted(model, solutions):
    VR, _ = solutions
    start = time.perf_counter()
    rows = _mc_sweep(model, lambda: mc.Threshold(VR.d, U0), VR.value, [0, 2, 4, VR.d, 8, 12])
    elapsed = time.perf_counter() - start
    worst = max(abs(z) for _, z in rows)
    _check(2, worst <= 3 and elapsed < 60,
           f"max |z| = {worst:.2f} over x0 in {{0,2,4,d,8,12}}, {elapsed:.1f} s; "
           + ", ".join(f"{x:.3g}:{z:+.2f}" for x, z in rows))


def test_criterion_3_mc_unrestricted(model, solutions):
    _, V = solutions
    VR = solutions[0]
    rows = _mc_sweep(model, lambda: mc.Barrier(V.b), V.value, [0, 2, 4, VR.d, 8, 12])
    worst = max(abs(z) for _, z in rows)
    _check(3, worst <= 3, f"max |z| = {worst:.2f}; " + ", ".join(f"{x:.3g}:{z:+.2f}" for x, z in rows))


def test_criterion_4_degenerate_regime():
    model = make_model(c=1.0, lam=2.0, delta=1.0, alpha=1.0)
    V = cf.unrestricted_value(model)
    ok = V.regime == "payall" and V.parameter is None and abs(V.value(0.0) - 1 / 3) <= 1e-15
    rows = _mc_sweep(model, lambda: mc.Barrier(0.0), lambda x: x + 1 / 3, [0, 1, 5])
    worst = max(abs(z) for _, z in rows)
    _check(4, ok and worst <= 3, f"regime {V.regime}, V(0) = {V.value(0.0):.15f}, MC max |z| = {worst:.2f}")


def test_criterion_5_residual_suites(model, solutions):
    VR, V = solutions
    grid = np.linspace(0, 20, 400)
    hjb = vf.hjb_report(VR, model, U0, grid, 1e-6)
    qvi = vf.qvi_report(V, model, grid, 1e-6)
    ok = hjb.passed and hjb.structure_ok and qvi.passed and qvi.structure_ok
    _check(5, ok, f"HJB max {hjb.max_abs:.1e} (pattern {'ok' if hjb.structure_ok else hjb.structure_notes}), "
                  f"QVI max {qvi.max_abs:.1e} (pattern {'ok' if qvi.structure_ok else qvi.structure_notes})")


def test_criterion_6_numeric_vs_closed_form(model, solutions):
    VR, V = solutions
    xs = np.linspace(0, 20, 401)
    settings = ns.default_settings(model, cover=20.0)
    nVR = ns.solve_restricted(model, U0, settings)
    nV = ns.solve_unrestricted(model, settings)
    d_err, b_err = abs(nVR.knot - VR.d), abs(nV.knot - V.b)
    rel = max(np.max(np.abs(nVR.value(xs) / VR.value(xs) - 1)), np.max(np.abs(nV.value(xs) / V.value(xs) - 1)))
    orders = []
    for exact, solver in ((VR, lambda s: ns.solve_restricted(model, U0, s)), (V, lambda s: ns.solve_unrestricted(model, s))):
        errs = []
        for n in (200, 400, 800):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)  # coarse grids trip the ode_tol advisory
                approx = solver(ns.SolveSettings(x_max=40.0, n_steps=n))
            errs.append(np.max(np.abs(approx.value(xs) - exact.value(xs))))
        orders += [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = d_err <= 1e-4 and b_err <= 1e-4 and rel <= 1e-5 and min(orders) >= 3
    _check(6, ok, f"|dd| = {d_err:.1e}, |db| = {b_err:.1e}, max rel value error {rel:.1e}, "
                  f"observed orders {', '.join(f'{o:.2f}' for o in orders)}")


def test_criterion_7_figure_data(tmp_path, capsys):
    prefix = str(tmp_path / "fig1")
    code = cli.main(["compare", "--config", cli_config(), "--grid", "0:20:0.1", "--out", prefix])
    summary = json.loads(capsys.readouterr().out)
    data = np.loadtxt(prefix + ".csv", delimiter=",", skiprows=1)
    x, V, VR, diff = data.T
    checks = {
        "exit 0": code == 0,
        "201 rows": len(x) == 201,
        "diff > 0": bool(np.all(diff > 0)),
        "VR <= 30": bool(np.all(VR <= 30.0)),
        "monotone V, VR": bool(np.all(np.diff(V) > 0) and np.all(np.diff(VR) > 0)),
        "VR(20) >= 29": bool(VR[-1] >= 29.0),
    }
    failed = [k for k, v in checks.items() if not v]
    _check(7, not failed,
           f"min diff {summary['min_diff']:.4f} at x = {summary['x_at_min']}, max VR {VR.max():.4f}, "
           f"VR(20) = {VR[-1]:.4f}" + (f"; failing: {', '.join(failed)}" if failed else ""))


def cli_config():
    return str(Path(__file__).resolve().parents[1] / "configs" / "paper-fig1.json")


def test_criterion_8_optimality_scans(model, solutions):
    VR, V = solutions
    cfg = mc.SimConfig(**MC)
    d_grid, b_grid = [4, 5, 6.29, 8, 10], [5, 6, 7.00, 8, 9]
    d_rows = mc.policy_suboptimality_scan(model, 4.0, cfg, d_grid, "threshold", U0)
    b_rows = mc.policy_suboptimality_scan(model, 4.0, cfg, b_grid, "barrier")
    outcome = []
    for rows, opt in ((d_rows, 6.29), (b_rows, 7.00)):
        best = max(r.estimate.mean for r in rows)
        at_opt = next(r.estimate for r in rows if r.parameter == opt)
        outcome.append((at_opt.mean + 2 * at_opt.stderr >= best, at_opt.mean - best, at_opt.stderr))
    ok = all(o[0] for o in outcome)
    _check(8, ok, "; ".join(f"{name}: est(opt) - max = {gap:+.4f} (stderr {se:.4f})"
                            for name, (_, gap, se) in zip(("d-scan", "b-scan"), outcome)))


def test_criterion_9_properties(model, solutions):
    _, V = solutions
    grid = np.linspace(0, 20, 401)
    inc = vf.increment_item(V, grid)
    violations = 0
    cfg = mc.SimConfig(seed=MC["seed"], n_paths=1, x0=12.0)
    for i in range(1000):
        for strategy in (mc.Barrier(V.b), mc.Threshold(6.291707709660961, U0)):
            try:
                path = mc.simulate_path(model, strategy, cfg, i)
                path.check()
                pre = cfg.x0
                for ev in path.events:
                    if ev.kind == "lump" and ev.amount > pre:
                        violations += 1
                    pre = ev.surplus
            except AssertionError:
                violations += 1
    base = mc.SimConfig(seed=MC["seed"], n_paths=20_000, x0=4.0, workers=1)
    a = mc.estimate_value(model, mc.Barrier(V.b), base)
    b = mc.estimate_value(model, mc.Barrier(V.b), mc.SimConfig(base.seed, base.n_paths, x0=4.0, workers=4))
    identical = a.mean == b.mean and a.stderr == b.stderr
    _check(9, inc.passed and violations == 0 and identical,
           f"increment worst deficit {inc.worst:.1e}, admissibility violations {violations}/2000 paths, "
           f"workers 1 vs 4 bit-identical: {identical}")
