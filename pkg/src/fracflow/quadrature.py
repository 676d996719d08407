"""Thin wrappers over scipy's integrators with explicit failure reporting."""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from fracflow.errors import AccuracyWarning, QuadratureError

# Round-off flagged by QUADPACK is accepted while the estimate stays within this
# multiple of the requested tolerance.
ROUNDOFF_SLACK = 100.0


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    label: str,
    epsabs: float = 1e-10,
    epsrel: float = 1e-10,
    limit: int = 200,
    points: Sequence[float] | None = None,
    node: float | tuple[float, ...] | None = None,
    on_failure: str = "raise",
) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over [a, b].

    Breakpoints are honoured on infinite ranges too, by splitting the range
    at them before calling QUADPACK.

    Args:
        f: Scalar integrand.
        a, b: Limits, either may be infinite.
        label: Name used in error messages.
        epsabs, epsrel, limit: Passed to ``scipy.integrate.quad``.
        points: Optional interior breakpoints.
        node: Outer-integration node reported on failure.
        on_failure: 'raise' (QuadratureError) or 'warn' (AccuracyWarning and
            return the best estimate).

    Raises:
        QuadratureError: if the integrator reports non-convergence and
            ``on_failure`` is 'raise'.
    """
    if a == b:
        return 0.0
    if points:
        inner = sorted(p for p in points if a < p < b)
        if inner and (math.isinf(a) or math.isinf(b)):
            edges = [a, *inner, b]
            return math.fsum(
                integrate(
                    f, lo, hi, label=label, epsabs=epsabs / len(edges), epsrel=epsrel,
                    limit=limit, node=node, on_failure=on_failure,
                )
                for lo, hi in zip(edges[:-1], edges[1:])
            )
        points = inner or None

    result = quad(
        f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, points=points or None, full_output=1
    )
    value, abserr = float(result[0]), float(result[1])
    failure = ""
    if len(result) > 3:
        message = str(result[3])
        tolerance = max(epsabs, epsrel * abs(value))
        roundoff_only = "roundoff" in message.lower()
        if not (roundoff_only and abserr <= ROUNDOFF_SLACK * tolerance):
            failure = message.splitlines()[0]
    if not np.isfinite(value):
        failure = "non-finite value"

    if failure:
        if on_failure == "warn" and np.isfinite(value):
            where = f" at node {node}" if node is not None else ""
            warnings.warn(
                f"{label}{where}: {failure} (error estimate {abserr:.3g})",
                AccuracyWarning,
                stacklevel=2,
            )
        else:
            raise QuadratureError(label, abserr, failure, node=node)
    return value


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre_on(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [lo, hi]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def composite_gauss_legendre(
    edges: Sequence[float], panel_width: float, order: int = 16
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule over consecutive intervals.

    Each interval between consecutive ``edges`` is cut into panels no wider
    than ``panel_width``; every panel carries an ``order``-point rule.
    """
    xs: list[np.ndarray] = []
    ws: list[np.ndarray] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        n_panels = max(1, math.ceil((hi - lo) / panel_width))
        cuts = np.linspace(lo, hi, n_panels + 1)
        for p_lo, p_hi in zip(cuts[:-1], cuts[1:]):
            x, w = gauss_legendre_on(p_lo, p_hi, order)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)
