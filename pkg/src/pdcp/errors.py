"""Exception hierarchy shared by the solvers, the simulator and the CLI."""

from __future__ import annotations


class PDCPError(Exception):
    """Base class for all package errors."""


class ModelInvalid(PDCPError, ValueError):
    """A model or run configuration violates its invariants.

    ``key`` names the offending field when one can be identified.
    """

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(f"{key}: {message}" if key and key not in message else message)
        self.key = key
        self.reason = message


class NumericFailure(PDCPError, ArithmeticError):
    """A numerical routine (quadrature, ODE step, root search) failed."""

    def __init__(self, message: str, module: str = "") -> None:
        super().__init__(f"{module}: {message}" if module else message)
        self.module = module


class HypothesisViolation(NumericFailure):
    """A structural assumption (monotonicity, concavity, unimodal slope) failed ex post."""

    def __init__(self, message: str, module: str = "", x: float | None = None) -> None:
        super().__init__(message, module)
        self.x = x


class XMaxTooSmall(NumericFailure):
    """The solve domain ends before the free boundary was located."""


class InternalInvariantError(PDCPError, AssertionError):
    """Something that cannot happen for valid inputs happened."""


class VerificationFailed(PDCPError):
    """A candidate value function failed residual or property checks."""
