"""Deterministic engines for the classical stable kernel.

The density-quadrature engine evaluates the explicit solution formulas
through the tabulated stable law; the closed-form engine evaluates the
Mittag-Leffler representation and serves as the independent oracle.

Both use the substitution y = r^β for the potential density of the
subordinator, which turns r^(β-1) E_{β,β}(-λ r^β) dr into
(1/β) E_{β,β}(-λ y) dy and removes the endpoint singularity.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np

from fracflow.errors import DomainError
from fracflow.kernels import vectorized, vectorized2
from fracflow.quadrature import integrate
from fracflow.results import SolutionCurve
from fracflow.special_fn import StableLaw, mittag_leffler, mittag_leffler2, stable_law

RL_CAPUTO = "rl_caputo"
RL_RL = "rl_rl"

INNER_TOL = 1e-9
OUTER_TOL = 1e-7


def _check(beta: float, lam: float, a: float, t: float) -> None:
    if not (0.0 < beta < 1.0):
        raise DomainError(f"stable index must lie in (0, 1), got {beta}")
    if lam < 0.0:
        raise DomainError(f"density quadrature needs lambda >= 0, got {lam}")
    if t < a:
        raise DomainError(f"evaluation point {t} lies below a = {a}")


def resolvent_factor(law: StableLaw, mu: float) -> float:
    """I(μ) = ∫_0^∞ e^(-μσ) σ^(-1/β) w_β(σ^(-1/β)) dσ = β·E[W^(-β) e^(-μ W^(-β))].

    Equals E_{β,β}(-μ); I(0) = 1/Γ(β).
    """
    beta = law.beta
    return beta * law.expect(lambda x: x ** (-beta) * np.exp(-mu * x ** (-beta)))


def _y_breaks(t: float, a: float, beta: float, breaks: Sequence[float]) -> list[float]:
    return sorted((t - c) ** beta for c in breaks if a < c < t)


def m_operator_quad(
    beta: float,
    lam: float,
    g: Callable[[float], float] | None,
    a: float,
    t: float,
    breaks: Sequence[float] = (),
) -> float:
    """M g(t) = ∫_0^(t-a) g(t-r) ∫_0^∞ e^(-λs) p_s(t, t-r) ds dr.

    Computed as (1/β) ∫_0^((t-a)^β) g(t - y^(1/β)) I(λy) dy with I from the
    stable density.

    Args:
        breaks: Points in (a, t) where g jumps.
    """
    _check(beta, lam, a, t)
    if g is None or t == a:
        return 0.0
    law = stable_law(beta)
    inv = 1.0 / beta
    i0 = resolvent_factor(law, 0.0)

    def integrand(y: float) -> float:
        factor = i0 if lam == 0.0 else resolvent_factor(law, lam * y)
        return float(g(t - y**inv)) * factor

    value = integrate(
        integrand, 0.0, (t - a) ** beta, points=_y_breaks(t, a, beta, breaks),
        epsabs=INNER_TOL, epsrel=INNER_TOL, label=f"M-operator (beta={beta}, lambda={lam})", node=t,
    )
    return value / beta


def _exit_density(law: StableLaw, length: float, s: np.ndarray | float):
    """(1/β)·length·s^(-1/β-1)·w_β(length·s^(-1/β)), vectorized over s > 0."""
    beta = law.beta
    s = np.asarray(s, dtype=float)
    return length * s ** (-1.0 / beta - 1.0) * law.pdf(length * s ** (-1.0 / beta)) / beta


def _exit_survival(law: StableLaw, length: float, s):
    return law.cdf(length * np.asarray(s, dtype=float) ** (-1.0 / law.beta))


def laplace_exit_quad(beta: float, lam: float, t: float, a: float, form: str = "density") -> float:
    """E[e^(-λτ)] by quadrature of the exit-time law.

    Args:
        form: 'density' integrates e^(-λs) μ(s) ds; 'parts' integrates
            λ e^(-λs) P[τ <= s] ds.
    """
    _check(beta, lam, a, t)
    if form not in ("density", "parts"):
        raise DomainError(f"unknown form '{form}'")
    if t == a:
        return 1.0
    law = stable_law(beta)
    length = t - a
    scale = length**beta
    pivot = scale / (1.0 + scale)

    if form == "density":

        def integrand(v: float) -> float:
            if v <= 0.0 or v >= 1.0:
                return 0.0
            s = v / (1.0 - v)
            return math.exp(-lam * s) * float(_exit_density(law, length, s)) / (1.0 - v) ** 2

    else:
        if lam == 0.0:
            return 1.0

        def integrand(v: float) -> float:
            if v <= 0.0 or v >= 1.0:
                return 0.0
            s = v / (1.0 - v)
            tail = 1.0 - float(_exit_survival(law, length, s))
            return lam * math.exp(-lam * s) * tail / (1.0 - v) ** 2

    return integrate(
        integrand, 0.0, 1.0, points=[pivot], epsabs=INNER_TOL, epsrel=INNER_TOL, limit=400,
        label=f"exit-time Laplace transform (beta={beta}, lambda={lam}, form={form})", node=t,
    )


def solve_rl_quad(
    beta: float,
    lam: float,
    g: Callable | None,
    a: float,
    grid: Sequence[float],
    breaks: Sequence[float] = (),
) -> SolutionCurve:
    """w(t) = M g(t) on the grid; w(a) = 0."""
    points = [float(t) for t in grid]
    values = [m_operator_quad(beta, lam, g, a, t, breaks) for t in points]
    return SolutionCurve(points=points, values=values, method="quad")


def shift_source(g: Callable | None, shift: float) -> Callable | None:
    """g - shift, keeping None for the zero source when shift is 0."""
    if shift == 0.0:
        return g
    if g is None:
        return lambda x: -shift
    return lambda x: g(x) - shift


def caputo_solution(
    beta: float, lam: float, g: Callable | None, u_a: float, a: float,
    breaks: Sequence[float] = (),
) -> Callable[[float], float]:
    """u as a function of t: u(t) = u_a·E[e^(-λτ)] + M g(t).

    The boundary term comes from the exit-time law and the source term from
    the occupation integral.
    """

    def u(t: float) -> float:
        if t <= a:
            return u_a
        boundary = u_a * laplace_exit_quad(beta, lam, t, a) if u_a != 0.0 else 0.0
        return boundary + m_operator_quad(beta, lam, g, a, t, breaks)

    return u


def solve_caputo_quad(
    beta: float,
    lam: float,
    g: Callable | None,
    u_a: float,
    a: float,
    grid: Sequence[float],
    breaks: Sequence[float] = (),
) -> SolutionCurve:
    """u(t) = u_a·E[e^(-λτ)] + M g(t) on the grid; u(a) = u_a."""
    u = caputo_solution(beta, lam, g, u_a, a, breaks)
    points = [float(t) for t in grid]
    for t in points:
        _check(beta, lam, a, t)
    return SolutionCurve(points=points, values=[u(t) for t in points], method="quad")


def solve_caputo_closed_form(
    beta: float,
    lam: float,
    g: Callable | None,
    u_a: float,
    a: float,
    grid: Sequence[float],
    breaks: Sequence[float] = (),
) -> SolutionCurve:
    """u(t) = u_a E_β(-λ(t-a)^β) + ∫_a^t g(r)(t-r)^(β-1) E_{β,β}(-λ(t-r)^β) dr.

    Any real λ is accepted.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError(f"stable index must lie in (0, 1), got {beta}")
    inv = 1.0 / beta
    points = [float(t) for t in grid]
    values = []
    for t in points:
        if t < a:
            raise DomainError(f"evaluation point {t} lies below a = {a}")
        if t == a:
            values.append(u_a)
            continue
        value = u_a * mittag_leffler(beta, -lam * (t - a) ** beta) if u_a else 0.0
        if g is not None:

            def integrand(y: float, t=t) -> float:
                return float(g(t - y**inv)) * mittag_leffler2(beta, beta, -lam * y)

            value += integrate(
                integrand, 0.0, (t - a) ** beta, points=_y_breaks(t, a, beta, breaks),
                epsabs=INNER_TOL, epsrel=INNER_TOL,
                label=f"Mittag-Leffler convolution (beta={beta}, lambda={lam})", node=t,
            ) / beta
        values.append(value)
    return SolutionCurve(points=points, values=values, method="closed_form")


# ─── Mixed two-dimensional problem ───────────────────────────────────────────


def _phi_term(
    law1: StableLaw,
    law2: StableLaw,
    lam: float,
    phi: Callable,
    t1: float,
    t2: float,
    phi_breaks: Sequence[float],
) -> float:
    """∫_0^∞ e^(-λs) μ2(s) E[φ(T1(s)); T1(s) > 0] ds."""
    b1, b2 = law1.beta, law2.beta
    phi_vec = vectorized(phi)

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0
        spread = s ** (1.0 / b1)
        breaks = tuple((t1 - c) / spread for c in phi_breaks if 0.0 < c < t1)
        inner = law1.expect(lambda x: phi_vec(t1 - spread * x), upper=t1 / spread, breaks=breaks)
        return math.exp(-lam * s) * float(_exit_density(law2, t2, s)) * inner

    return integrate(
        integrand, 0.0, math.inf, points=[min(t1**b1, t2**b2)], epsabs=1e-9, epsrel=OUTER_TOL,
        limit=400, label="mixed boundary term", node=(t1, t2),
    )


def _source_term(
    law1: StableLaw,
    law2: StableLaw,
    lam: float,
    g: Callable,
    t1: float,
    t2: float,
) -> float:
    """∫_0^∞ e^(-λs) E[g(T1(s), T2(s)); T1(s) > 0, T2(s) > 0] ds."""
    b1, b2 = law1.beta, law2.beta
    g_vec = vectorized2(g)

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0
        spread1 = s ** (1.0 / b1)
        spread2 = s ** (1.0 / b2)
        x1, w1 = law1.rule(upper=t1 / spread1)
        x2, w2 = law2.rule(upper=t2 / spread2)
        if x1.size == 0 or x2.size == 0:
            return 0.0
        u1, u2 = np.meshgrid(t1 - spread1 * x1, t2 - spread2 * x2, indexing="ij")
        return math.exp(-lam * s) * float(w1 @ g_vec(u1, u2) @ w2)

    return integrate(
        integrand, 0.0, math.inf, points=[min(t1**b1, t2**b2)], epsabs=1e-9, epsrel=OUTER_TOL,
        limit=400, label="mixed source term", node=(t1, t2),
    )


def solve_mixed_quad(
    beta1: float,
    beta2: float,
    lam: float,
    g: Callable | None,
    phi: Callable | None,
    grid2d: Sequence[tuple[float, float]],
    variant: str = RL_CAPUTO,
    phi_breaks: Sequence[float] = (),
) -> SolutionCurve:
    """Mixed problem by density quadrature; boundary rows are emitted exactly."""
    for beta in (beta1, beta2):
        if not (0.0 < beta < 1.0):
            raise DomainError(f"stable index must lie in (0, 1), got {beta}")
    if lam < 0.0:
        raise DomainError(f"density quadrature needs lambda >= 0, got {lam}")
    if variant not in (RL_CAPUTO, RL_RL):
        raise DomainError(f"unknown mixed variant '{variant}'")
    if phi is not None and abs(float(phi(0.0))) > 1e-12:
        raise DomainError(f"boundary data must vanish at 0, got phi(0) = {phi(0.0)}")
    if variant == RL_RL:
        phi = None
    law1, law2 = stable_law(beta1), stable_law(beta2)
    points, values = [], []
    for t1, t2 in grid2d:
        t1, t2 = float(t1), float(t2)
        if t1 < 0.0 or t2 < 0.0:
            raise DomainError(f"grid point ({t1}, {t2}) lies outside the quadrant")
        points.append((t1, t2))
        if t1 == 0.0:
            values.append(0.0)
            continue
        if t2 == 0.0:
            values.append(float(phi(t1)) if phi is not None else 0.0)
            continue
        value = 0.0
        if phi is not None:
            value += _phi_term(law1, law2, lam, phi, t1, t2, phi_breaks)
        if g is not None:
            value += _source_term(law1, law2, lam, g, t1, t2)
        values.append(value)
    return SolutionCurve(points=points, values=values, method="quad")


def laplace_exit_mixed_quad(beta1: float, beta2: float, lam: float, t1: float, t2: float) -> float:
    """E[e^(-λ min(τ1, τ2))] = ∫_0^∞ e^(-λs)(μ1(s) P[τ2 > s] + μ2(s) P[τ1 > s]) ds."""
    if t1 <= 0.0 or t2 <= 0.0:
        return 1.0
    law1, law2 = stable_law(beta1), stable_law(beta2)

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0
        first = float(_exit_density(law1, t1, s)) * float(_exit_survival(law2, t2, s))
        second = float(_exit_density(law2, t2, s)) * float(_exit_survival(law1, t1, s))
        return math.exp(-lam * s) * (first + second)

    return integrate(
        integrand, 0.0, math.inf, points=[min(t1**beta1, t2**beta2)], epsabs=1e-10,
        epsrel=1e-9, limit=400, label="mixed exit-time Laplace transform", node=(t1, t2),
    )

