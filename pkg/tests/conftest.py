from __future__ import annotations

import pytest

from pdcp.riskmodel import ConstantDrift, ExponentialClaims, LinearDrift, RiskModel

EXAMPLE = {"c": 4.0, "lam": 2.0, "delta": 0.1, "alpha": 1.0, "u0": 3.0}


def make_model(c=4.0, lam=2.0, delta=0.1, alpha=1.0, rho=None) -> RiskModel:
    drift = ConstantDrift(c) if rho is None else LinearDrift(rho, c)
    return RiskModel(drift=drift, lam=lam, delta=delta, claims=ExponentialClaims(alpha))


@pytest.fixture(scope="session")
def example_model() -> RiskModel:
    return make_model()


@pytest.fixture(scope="session")
def degenerate_model() -> RiskModel:
    # alpha*lam*c = 2 <= (lam + delta)^2 = 9
    return make_model(c=1.0, lam=2.0, delta=1.0, alpha=1.0)


@pytest.fixture(scope="session")
def interest_model() -> RiskModel:
    return make_model(rho=0.05)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
