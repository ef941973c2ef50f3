"""Command-line front end: ``solve``, ``simulate``, ``verify`` and ``compare``.

Exit codes: 0 ok, 1 usage, 2 invalid model or configuration, 3 numerical
failure, 4 verification failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import closedform, montecarlo, numsolve, verify
from .errors import ModelInvalid, NumericFailure, VerificationFailed
from .riskmodel import RiskModel, model_from_dict

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3, 4

_CONFIG_KEYS = {"model", "scheme", "u0", "solver", "grid", "sim", "tol", "numeric", "out"}
_SIM_KEYS = {"seed", "paths", "eps_cut", "x0", "workers"}
_NUMERIC_KEYS = {"x_max", "n_steps", "ode_tol", "root_tol"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is reserved
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    model: RiskModel
    scheme: str = "restricted"
    u0: float | None = None
    solver: str = "closedform"
    grid: np.ndarray = field(default_factory=lambda: parse_grid("0:20:0.1"))
    sim: montecarlo.SimConfig = field(default_factory=montecarlo.SimConfig)
    tol: float = verify.RESIDUAL_TOL
    numeric: dict = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self) -> None:
        if self.scheme not in ("restricted", "unrestricted"):
            raise ModelInvalid(f"scheme must be restricted|unrestricted, got {self.scheme!r}", key="scheme")
        if self.solver not in ("closedform", "numeric"):
            raise ModelInvalid(f"solver must be closedform|numeric, got {self.solver!r}", key="solver")
        if self.scheme == "restricted":
            if self.u0 is None:
                raise ModelInvalid("the restricted scheme requires u0", key="u0")
            if not 0 < self.u0 < float(self.model.g(0.0)):
                raise ModelInvalid(f"u0={self.u0} must lie in (0, inf g)", key="u0")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise ModelInvalid("tol must be positive", key="tol")


def parse_grid(text: str) -> np.ndarray:
    """``A:B:STEP`` -> points ``A, A+STEP, ...`` up to and including ``B``."""
    try:
        a, b, step = (float(p) for p in text.split(":"))
    except ValueError as exc:
        raise ModelInvalid(f"grid must look like A:B:STEP, got {text!r}", key="grid") from exc
    if not (step > 0 and b >= a >= 0 and all(map(math.isfinite, (a, b, step)))):
        raise ModelInvalid(f"grid needs 0 <= A <= B and STEP > 0, got {text!r}", key="grid")
    n = int(math.floor((b - a) / step + 1e-9))
    return a + step * np.arange(n + 1)


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    for k in d:
        if k not in allowed:
            raise ModelInvalid(f"unknown key '{where}{k}'", key=f"{where}{k}")


def build_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, Any] = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ModelInvalid(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ModelInvalid("config must be a JSON object")
        _check_keys(raw, _CONFIG_KEYS, "")
    if "model" not in raw:
        raise UsageError("a model is required (--config with a 'model' section)")
    model = model_from_dict(raw["model"])

    sim_raw = dict(raw.get("sim", {}))
    _check_keys(sim_raw, _SIM_KEYS, "sim.")
    num_raw = dict(raw.get("numeric", {}))
    _check_keys(num_raw, _NUMERIC_KEYS, "numeric.")

    def pick(flag, key, default=None, src=raw):
        v = getattr(args, flag, None)
        return v if v is not None else src.get(key, default)

    sim = montecarlo.SimConfig(
        seed=int(pick("seed", "seed", montecarlo.SimConfig.seed, sim_raw)),
        n_paths=int(pick("paths", "paths", montecarlo.SimConfig.n_paths, sim_raw)),
        eps_cut=float(pick("eps_cut", "eps_cut", montecarlo.SimConfig.eps_cut, sim_raw)),
        x0=float(pick("x0", "x0", 0.0, sim_raw)),
        workers=int(pick("workers", "workers", 1, sim_raw)),
    )
    if getattr(args, "x_max", None) is not None:
        num_raw["x_max"] = args.x_max
    u0 = pick("u0", "u0")
    return RunConfig(
        model=model,
        scheme=pick("scheme", "scheme", "restricted"),
        u0=None if u0 is None else float(u0),
        solver=pick("solver", "solver", "closedform"),
        grid=parse_grid(pick("grid", "grid", "0:20:0.1")),
        sim=sim,
        tol=float(pick("tol", "tol", verify.RESIDUAL_TOL)),
        numeric=num_raw,
        out=pick("out", "out"),
    )


# --------------------------------------------------------------------------
# solving


def _settings(cfg: RunConfig) -> numsolve.SolveSettings:
    return numsolve.default_settings(cfg.model, cover=float(cfg.grid[-1]), **cfg.numeric)


def solve(cfg: RunConfig, scheme: str | None = None):
    scheme = scheme or cfg.scheme
    if cfg.solver == "closedform":
        if scheme == "restricted":
            return closedform.restricted_value(cfg.model, cfg.u0)
        return closedform.unrestricted_value(cfg.model)
    settings = _settings(cfg)
    if scheme == "restricted":
        return numsolve.solve_restricted(cfg.model, cfg.u0, settings)
    return numsolve.solve_unrestricted(cfg.model, settings)


def _grid_with_knot(grid: np.ndarray, knot: float | None) -> np.ndarray:
    if knot is None or not grid[0] <= knot <= grid[-1] or np.any(grid == knot):
        return grid
    return np.sort(np.append(grid, knot))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def cmd_solve(cfg: RunConfig) -> int:
    sol = solve(cfg)
    payload = sol.to_dict()
    if cfg.out:
        xs = _grid_with_knot(cfg.grid, sol.knot)
        numsolve.write_grid_csv(f"{cfg.out}.csv", xs, sol.value(xs), sol.deriv(xs))
        _write_json(Path(f"{cfg.out}.json"), payload)
    _emit(payload)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, strategy_text: str | None, trace: str | None, trace_paths: int) -> int:
    if strategy_text is None:
        sol = solve(cfg)
        if sol.scheme == "restricted":
            strategy = montecarlo.Threshold(sol.knot or 0.0, cfg.u0)
        else:
            strategy = montecarlo.Barrier(sol.knot or 0.0)
    else:
        try:
            strategy = montecarlo.parse_strategy(strategy_text)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    est = montecarlo.estimate_value(cfg.model, strategy, cfg.sim)
    payload = est.to_dict()
    if trace:
        with open(trace, "w") as fh:
            for path in montecarlo.simulate_paths(cfg.model, strategy, cfg.sim, range(trace_paths)):
                for line in montecarlo.trace_lines(path):
                    fh.write(line + "\n")
    if cfg.out:
        _write_json(Path(f"{cfg.out}.json"), {**payload, "strategy": montecarlo.strategy_to_str(strategy)})
    _emit(payload)
    return EXIT_OK


@dataclass(frozen=True)
class LoadedCandidate:
    """A value function read back from ``x,value,deriv`` rows (cubic Hermite between rows)."""

    grid: numsolve.GridFunction
    knot: float | None = None

    def value(self, x):
        return self.grid.value(x)

    def deriv(self, x):
        return self.grid.deriv(x)

    def claim_integral(self, model: RiskModel, x: float) -> float:
        if x > self.grid.x_max * (1 + 1e-12):
            raise ModelInvalid(f"candidate grid ends at {self.grid.x_max}, cannot integrate to {x}")
        return model.lam * self.grid.weighted_integral(0.0, x, x, model.alpha)


def load_candidate(prefix: str) -> tuple[LoadedCandidate, dict]:
    base = prefix[:-4] if prefix.endswith(".csv") else prefix
    meta: dict = {}
    meta_path = Path(f"{base}.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    xs, vs, ds = numsolve.read_grid_csv(f"{base}.csv")
    if xs.size == 0 or xs[0] != 0.0:
        raise ModelInvalid("candidate grid must start at x = 0 to evaluate the claim integral")
    return LoadedCandidate(numsolve.GridFunction(xs, vs, ds), meta.get("parameter")), meta


def _verify_candidate(cand, cfg: RunConfig, scheme: str, grid: np.ndarray) -> dict:
    checks: list[dict] = []
    if scheme == "restricted":
        rep = verify.hjb_report(cand, cfg.model, cfg.u0, grid, cfg.tol)
        checks.append({"name": "hjb_residual", "passed": rep.passed, "worst": rep.max_abs, "worst_x": rep.worst_x})
        items = [
            verify.bound_item(cand, cfg.u0, cfg.model.delta, grid),
            verify.monotone_item(cand, grid),
            verify.smooth_fit_item("smooth_fit", cand, max(verify.SMOOTH_FIT_TOL, cfg.tol)),
        ]
    else:
        rep = verify.qvi_report(cand, cfg.model, grid, cfg.tol)
        checks.append({"name": "qvi_residual", "passed": rep.passed, "worst": rep.max_abs, "worst_x": rep.worst_x})
        items = [
            verify.increment_item(cand, grid),
            verify.smooth_fit_item("smooth_fit", cand, max(verify.SMOOTH_FIT_TOL, cfg.tol)),
        ]
    checks.append({"name": "structure", "passed": rep.structure_ok, "notes": rep.structure_notes})
    checks.extend(i.to_dict() for i in items)
    failed = [c for c in checks if not c["passed"]]
    return {"report": rep, "summary": {
        "scheme": scheme,
        "passed": not failed,
        "residual": rep.to_dict(),
        "checks": checks,
        "worst_offender": failed[0] if failed else None,
    }}


def cmd_verify(cfg: RunConfig, candidate: str | None) -> int:
    scheme = cfg.scheme
    if candidate:
        cand, meta = load_candidate(candidate)
        scheme = meta.get("scheme", scheme)
        if scheme == "restricted" and cfg.u0 is None:
            raise ModelInvalid("verifying a restricted candidate requires u0", key="u0")
        grid = cand.grid.xs
    else:
        cand = solve(cfg)
        grid = cfg.grid
    result = _verify_candidate(cand, cfg, scheme, grid)
    summary = result["summary"]
    if cfg.out:
        _write_json(Path(f"{cfg.out}.json"), summary)
        result["report"].write_csv(f"{cfg.out}.csv")
    _emit(summary)
    if not summary["passed"]:
        raise VerificationFailed(json.dumps(summary["worst_offender"]))
    return EXIT_OK


def compare_table(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if cfg.u0 is None:
        raise ModelInvalid("compare requires u0", key="u0")
    V = solve(cfg, "unrestricted")
    VR = solve(cfg, "restricted")
    return cfg.grid, V.value(cfg.grid), VR.value(cfg.grid)


def cmd_compare(cfg: RunConfig) -> int:
    xs, v, vr = compare_table(cfg)
    diff = v - vr
    i = int(np.argmin(diff))
    summary = {"n": int(xs.size), "min_diff": float(diff[i]), "x_at_min": float(xs[i]),
               "max_VR": float(np.max(vr)), "u0_over_delta": cfg.u0 / cfg.model.delta}
    if cfg.out:
        with open(f"{cfg.out}.csv", "w") as fh:
            fh.write("x,V,VR,diff\n")
            for row in zip(xs, v, vr, diff):
                fh.write(",".join(f"{c:.17g}" for c in row) + "\n")
        _write_json(Path(f"{cfg.out}.json"), summary)
    _emit(summary)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--scheme", choices=["restricted", "unrestricted"])
    p.add_argument("--u0", type=float, help="maximal dividend rate (restricted scheme)")
    p.add_argument("--solver", choices=["closedform", "numeric"])
    p.add_argument("--grid", help="evaluation grid A:B:STEP")
    p.add_argument("--x0", type=float, help="initial surplus for simulation")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps-cut", dest="eps_cut", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--x-max", dest="x_max", type=float, help="numeric solver domain")
    p.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.csv")
    p.add_argument("--tol", type=float, help="residual tolerance for verify")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdcp", description="Optimal dividends in piecewise-deterministic compound Poisson models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("solve", help="optimal threshold/barrier and value function"))
    p = sub.add_parser("simulate", help="Monte Carlo value of a strategy")
    _common(p)
    p.add_argument("strategy", nargs="?",
                   help="threshold:d=F,u0=F | barrier:b=F | rate:u=F | none (default: the solved optimum)")
    p.add_argument("--trace", help="write JSON lines for the first --trace-paths paths")
    p.add_argument("--trace-paths", type=int, default=1)
    p = sub.add_parser("verify", help="HJB/QVI residual and property checks")
    _common(p)
    p.add_argument("--candidate", help="PREFIX of a solve output (PREFIX.csv, optional PREFIX.json)")
    _common(sub.add_parser("compare", help="restricted vs unrestricted value table"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            cfg = build_config(args)
            if args.command == "solve":
                return cmd_solve(cfg)
            if args.command == "simulate":
                return cmd_simulate(cfg, args.strategy, args.trace, args.trace_paths)
            if args.command == "verify":
                return cmd_verify(cfg, args.candidate)
            return cmd_compare(cfg)
    except UsageError as exc:
        print(f"pdcp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelInvalid as exc:
        print(f"pdcp: invalid model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except NumericFailure as exc:
        print(f"pdcp: numeric failure in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VerificationFailed as exc:
        print(f"pdcp: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
