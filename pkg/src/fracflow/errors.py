"""Exceptions and warning categories for fracflow.

Each exception family maps to one CLI exit code:

- ConfigError      -> 1 (bad run configuration or settings)
- NumericalError   -> 2 (quadrature failure, horizon exhaustion)
- ValidationFailure -> 3 (validation battery failed)
"""

from __future__ import annotations


class FracflowError(Exception):
    """Base class for all fracflow errors."""

    exit_code = 2


class ConfigError(FracflowError):
    """Invalid run configuration; the message names the offending key."""

    exit_code = 1

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DomainError(FracflowError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 1


class NumericalError(FracflowError):
    """A numerical procedure could not reach its accuracy contract."""

    exit_code = 2


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge.

    Attributes:
        label: What was being integrated.
        achieved: Error estimate reported by the integrator.
        node: Optional outer-integration node at which the failure occurred.
    """

    def __init__(
        self,
        label: str,
        achieved: float,
        detail: str = "",
        node: float | tuple[float, ...] | None = None,
    ):
        self.label = label
        self.achieved = achieved
        self.node = node
        where = f" at node {node}" if node is not None else ""
        message = f"quadrature for {label} did not converge{where} (error estimate {achieved:.3g})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class HorizonError(NumericalError):
    """Too many paths reached the simulation horizon without exiting."""


class ValidationFailure(FracflowError):
    """The cross-engine validation battery reported failing checks."""

    exit_code = 3


class AccuracyWarning(UserWarning):
    """A value was returned but its accuracy contract may not hold."""


class HypothesisWarning(UserWarning):
    """A kernel failed a numerical probe of its structural hypotheses."""


class HorizonWarning(UserWarning):
    """Some simulated paths were truncated at the horizon."""
