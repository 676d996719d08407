"""Special functions: Mittag-Leffler functions and one-sided stable laws.

Conventions:
    w_β(·;1,1) is the density of the positive β-stable law whose Laplace
    transform is exp(-λ^β). It is evaluated through Kanter's angular form

        F(x) = (1/π) ∫_0^π exp(-A(u) x^{-β/(1-β)}) du,
        A(u) = [sin(βu)^β sin((1-β)u)^(1-β) / sin u]^(1/(1-β)),

    whose integrand is positive, monotone in u and free of oscillation.
    Gamma and reciprocal Gamma values come from ``scipy.special``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import gammaln, rgamma

from fracflow.errors import DomainError, NumericalError
from fracflow.quadrature import composite_gauss_legendre, gauss_legendre_on, integrate

ML_SWITCH = 10.0
ML_TERMS = 8

# Largest log-magnitude of power-series terms we are prepared to cancel.
SERIES_EXPONENT_BUDGET = 30.0
MAX_SERIES_TERMS = 65_536
# Float series are trusted while sum|terms| / |sum| stays below this ratio.
CANCELLATION_LIMIT = 100.0

# Kanter integrand h·exp(-h) is negligible once h exceeds its floor by this much.
KANTER_CUTOFF = 60.0


@dataclass(frozen=True)
class StableParams:
    """Index of a totally skewed positive stable law.

    Attributes:
        beta: Stability index, strictly inside (0, 1).
    """

    beta: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise DomainError(f"stable index must lie in (0, 1), got {self.beta}")


def _beta_of(p: StableParams | float) -> float:
    return p.beta if isinstance(p, StableParams) else StableParams(float(p)).beta


# ─── Mittag-Leffler functions ────────────────────────────────────────────────


def mittag_leffler(
    beta: float,
    z: float,
    *,
    method: str = "auto",
    switch: float = ML_SWITCH,
    terms: int = ML_TERMS,
) -> float:
    """One-parameter Mittag-Leffler function E_β(z) = Σ z^j / Γ(jβ + 1).

    Args:
        beta: Order, 0 < beta <= 2.
        z: Real argument.
        method: 'auto', or force 'series' / 'large' (negative-argument regime).
        switch: |z| above which the large-argument regime takes over.
        terms: Number of terms of the asymptotic expansion.

    Raises:
        DomainError: beta outside (0, 2] or non-finite z.
        OverflowError: the value exceeds the double range.
    """
    return _mittag_leffler(beta, 1.0, z, method, switch, terms)


def mittag_leffler2(
    beta1: float,
    beta2: float,
    z: float,
    *,
    method: str = "auto",
    switch: float = ML_SWITCH,
    terms: int = ML_TERMS,
) -> float:
    """Two-parameter Mittag-Leffler function E_{β1,β2}(z) = Σ z^j / Γ(jβ1 + β2)."""
    return _mittag_leffler(beta1, beta2, z, method, switch, terms)


def series_switch_point(alpha: float, switch: float = ML_SWITCH) -> float:
    """Largest |z| handled by the power series for negative arguments.

    For alpha < 1 the biggest series term grows like exp(|z|^(1/alpha)), so the
    series is capped where that exponent reaches SERIES_EXPONENT_BUDGET.
    """
    if alpha >= 1.0:
        return switch
    return min(switch, SERIES_EXPONENT_BUDGET**alpha)


def _mittag_leffler(
    alpha: float, beta: float, z: float, method: str, switch: float, terms: int
) -> float:
    if not (alpha > 0.0 and beta > 0.0):
        raise DomainError(f"Mittag-Leffler parameters must be positive, got ({alpha}, {beta})")
    if alpha > 2.0:
        raise DomainError(f"Mittag-Leffler order must be at most 2, got {alpha}")
    if method not in ("auto", "series", "large"):
        raise DomainError(f"unknown Mittag-Leffler method '{method}'")
    z = float(z)
    if not math.isfinite(z):
        raise DomainError("Mittag-Leffler argument must be finite")

    if z == 0.0:
        return float(rgamma(beta))
    if method == "auto" and alpha == 1.0 and beta == 1.0:
        return math.exp(z)
    if z > 0.0:
        if method == "large":
            raise DomainError("the large-argument regime covers negative arguments only")
        if z ** (1.0 / alpha) > 700.0:
            raise OverflowError(f"E_{{{alpha},{beta}}}({z}) exceeds the double range")
        return _ml_series(alpha, beta, z)

    x = -z
    if method == "series" or (method == "auto" and x <= series_switch_point(alpha, switch)):
        return _ml_series(alpha, beta, z)
    if alpha < 1.0:
        return _ml_large_negative(alpha, beta, x, terms)
    if method == "large":
        raise DomainError("the large-argument regime needs an order below 1")
    return _ml_series(alpha, beta, z)


def _series_logs(alpha: float, beta: float, log_abs: float, drop: float) -> np.ndarray:
    """log|z^j / Γ(αj+β)| for j = 0..n-1, long enough for the tail to fall by ``drop``."""
    n = 128
    while True:
        j = np.arange(n, dtype=float)
        logs = j * log_abs - gammaln(alpha * j + beta)
        peak = logs.max()
        if logs[-1] < logs[-2] and logs[-1] < min(peak, 0.0) - drop:
            return logs
        n *= 2
        if n > MAX_SERIES_TERMS:
            raise NumericalError(
                f"Mittag-Leffler series needs more than {MAX_SERIES_TERMS} terms "
                f"(alpha={alpha}, log|z|={log_abs:.3g})"
            )


def _ml_series(alpha: float, beta: float, z: float) -> float:
    logs = _series_logs(alpha, beta, math.log(abs(z)), drop=40.0)
    peak = float(logs.max())
    if peak < 700.0:
        magnitudes = np.exp(logs)
        signs = np.ones_like(magnitudes)
        if z < 0.0:
            signs[1::2] = -1.0
        total = math.fsum(signs * magnitudes)
        absolute = math.fsum(magnitudes)
        if absolute <= CANCELLATION_LIMIT * abs(total):
            return total
    return _ml_series_mp(alpha, beta, z, peak)


def _ml_series_mp(alpha: float, beta: float, z: float, log_peak: float) -> float:
    """Extended-precision series; working digits cover the cancellation."""
    dps = 25 + math.ceil(max(log_peak, 0.0) / math.log(10.0))
    logs = _series_logs(alpha, beta, math.log(abs(z)), drop=math.log(10.0) * (dps + 2))
    with mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        for j in range(len(logs)):
            total += power * mpmath.rgamma(a * j + b)
            power *= zz
        return float(total)


def _ml_large_negative(alpha: float, beta: float, x: float, terms: int) -> float:
    """E_{α,β}(-x) for large x and α < 1.

    Uses the algebraic expansion Σ_{k=1..K} (-1)^(k+1) x^(-k) / Γ(β - kα) when
    its truncation estimate is small enough, otherwise an integral
    representation (β = 1 or β = α) or the extended-precision series.
    """
    k = np.arange(1, terms + 3, dtype=float)
    values = (-1.0) ** (k + 1.0) * rgamma(beta - alpha * k) * x ** (-k)
    estimate = math.fsum(values[:terms])
    truncation = float(np.max(np.abs(values[terms:])))
    if truncation <= 1e-12 * max(abs(estimate), 1e-300) or truncation == 0.0:
        return estimate
    if beta == 1.0:
        return _ml_negative_integral(alpha, x, derivative=False)
    if beta == alpha:
        return _ml_negative_integral(alpha, x, derivative=True)
    return _ml_series(alpha, beta, -x)


def _ml_negative_integral(alpha: float, x: float, derivative: bool) -> float:
    """Completely monotone integral forms for 0 < α < 1, x > 0.

    E_α(-x)   = sin(απ)/(απ) ∫_0^∞ exp(-(xu)^(1/α)) / (u² + 2u cos απ + 1) du
    E_{α,α}(-x) = sin(απ)/(απ) x^(1/α - 1) ∫_0^∞ u^(1/α) exp(-(xu)^(1/α)) / (...) du
    """
    inv = 1.0 / alpha
    cos_term = 2.0 * math.cos(alpha * math.pi)

    def integrand(u: float) -> float:
        weight = u**inv if derivative else 1.0
        return weight * math.exp(-((x * u) ** inv)) / (u * u + cos_term * u + 1.0)

    value = integrate(
        integrand, 0.0, math.inf, points=[1.0 / x], epsabs=0.0, epsrel=1e-12,
        label=f"Mittag-Leffler integral (alpha={alpha}, x={x})",
    )
    scale = math.sin(alpha * math.pi) / (alpha * math.pi)
    if derivative:
        scale *= x ** (inv - 1.0)
    return scale * value


# ─── Stable laws (Kanter representation) ─────────────────────────────────────


def kanter_log_a(beta: float, u: np.ndarray) -> np.ndarray:
    """log A(u) of Kanter's function, vectorized over u in (0, π)."""
    return (
        beta * np.log(np.sin(beta * u))
        + (1.0 - beta) * np.log(np.sin((1.0 - beta) * u))
        - np.log(np.sin(u))
    ) / (1.0 - beta)


def _log_a(beta: float, u: float) -> float:
    return (
        beta * math.log(math.sin(beta * u))
        + (1.0 - beta) * math.log(math.sin((1.0 - beta) * u))
        - math.log(math.sin(u))
    ) / (1.0 - beta)


def _log_a0(beta: float) -> float:
    """log A(0+) = log(β^(β/(1-β)) (1-β))."""
    return beta * math.log(beta) / (1.0 - beta) + math.log(1.0 - beta)


class _KanterLevels:
    """Angles at which h(u) = A(u)·c crosses given levels (h is increasing)."""

    _LO = 1e-9
    _HI = math.pi * (1.0 - 1e-15)

    def __init__(self, beta: float, log_c: float):
        self.beta = beta
        self.log_c = log_c
        self.log_h0 = _log_a0(beta) + log_c
        self._f_hi = _log_a(beta, self._HI) + log_c

    def angle(self, level: float) -> float | None:
        target = math.log(level)
        if not (self.log_h0 < target < self._f_hi):
            return None
        return brentq(
            lambda u: _log_a(self.beta, u) + self.log_c - target, self._LO, self._HI, xtol=1e-14
        )

    def breakpoints(self) -> list[float]:
        h0 = math.exp(min(self.log_h0, 700.0))
        levels = sorted({1.0, 4.0, 32.0, h0 + 1.0, h0 + 4.0, h0 + 32.0})
        return [u for u in (self.angle(lv) for lv in levels if lv > h0) if u is not None]


def stable_density(p: StableParams | float, x: float) -> float:
    """Density w_β(x;1,1) of the positive stable law with Laplace transform exp(-λ^β).

    Returns 0 for x <= 0. Emits AccuracyWarning when the angular quadrature
    does not reach its tolerance.
    """
    beta = _beta_of(p)
    x = float(x)
    if x <= 0.0:
        return 0.0
    gam = beta / (1.0 - beta)
    log_c = -gam * math.log(x)
    levels = _KanterLevels(beta, log_c)
    floor = max(levels.log_h0, 0.0)
    if levels.log_h0 > math.log(745.0):
        return 0.0
    upper = levels.angle(math.exp(floor) + KANTER_CUTOFF) or math.pi

    def integrand(u: float) -> float:
        log_h = _log_a(beta, u) + log_c
        if log_h > 7.0:
            h = math.exp(log_h)
            return h * math.exp(-h) if h < 745.0 else 0.0
        h = math.exp(log_h)
        return h * math.exp(-h)

    value = integrate(
        integrand, 0.0, upper, points=levels.breakpoints(), epsabs=0.0, epsrel=1e-11,
        limit=400, label=f"stable density (beta={beta}, x={x})", on_failure="warn",
    )
    return gam * value / (math.pi * x)


def stable_cdf(p: StableParams | float, x: float) -> float:
    """Distribution function P[W_β(1,1) <= x]; 0 for x <= 0."""
    beta = _beta_of(p)
    x = float(x)
    if x <= 0.0:
        return 0.0
    log_c = -(beta / (1.0 - beta)) * math.log(x)
    levels = _KanterLevels(beta, log_c)
    if levels.log_h0 > math.log(745.0):
        return 0.0
    h0 = math.exp(levels.log_h0)
    upper = levels.angle(h0 + KANTER_CUTOFF) or math.pi

    def integrand(u: float) -> float:
        log_h = _log_a(beta, u) + log_c
        return math.exp(-math.exp(log_h)) if log_h < 7.0 else 0.0

    value = integrate(
        integrand, 0.0, upper, points=levels.breakpoints(), epsabs=0.0, epsrel=1e-11,
        limit=400, label=f"stable cdf (beta={beta}, x={x})", on_failure="warn",
    )
    return min(1.0, value / math.pi)


def stable_sf(p: StableParams | float, x: float) -> float:
    """Survival function P[W_β(1,1) > x], accurate in the right tail."""
    beta = _beta_of(p)
    x = float(x)
    if x <= 0.0:
        return 1.0
    log_c = -(beta / (1.0 - beta)) * math.log(x)
    levels = _KanterLevels(beta, log_c)
    if levels.log_h0 > math.log(KANTER_CUTOFF):
        return 1.0 - stable_cdf(beta, x)
    upper = levels.angle(KANTER_CUTOFF) or math.pi

    def integrand(u: float) -> float:
        return -math.expm1(-math.exp(_log_a(beta, u) + log_c))

    value = integrate(
        integrand, 0.0, upper, points=levels.breakpoints(), epsabs=0.0, epsrel=1e-11,
        limit=400, label=f"stable survival (beta={beta}, x={x})", on_failure="warn",
    )
    return min(1.0, (value + (math.pi - upper)) / math.pi)


def check_ml_stable_identity(beta: float, u: float) -> float:
    """Signed residual β·E_β(-u) - ∫_0^∞ exp(-uy) y^(-1-1/β) w_β(y^(-1/β)) dy.

    A joint self-test of ``mittag_leffler`` and ``stable_density``.

    Raises:
        DomainError: beta outside (0, 1) or u < 0.
        QuadratureError: the outer integral did not converge.
    """
    StableParams(beta)
    if u < 0.0:
        raise DomainError(f"identity check needs u >= 0, got {u}")
    inv = 1.0 / beta

    def integrand(y: float) -> float:
        return math.exp(-u * y) * y ** (-1.0 - inv) * stable_density(beta, y ** (-inv))

    points = [1.0] if u == 0.0 else sorted({1.0, 1.0 / u})
    integral = integrate(
        integrand, 0.0, math.inf, points=points, epsabs=1e-12, epsrel=1e-10,
        label=f"Mittag-Leffler/stable identity (beta={beta}, u={u})",
    )
    return beta * mittag_leffler(beta, -u) - integral


# ─── Tabulated stable law ────────────────────────────────────────────────────


class StableLaw:
    """Vectorized w_β and its distribution function, tabulated from the exact integrals.

    Between ``x_lo`` (where w drops below 1e-250) and ``x_hi`` the log-density
    and log-CDF/log-survival are cubic splines in log x; above ``x_hi`` the
    convergent series in x^(-β) is used; below ``x_lo`` everything is 0.
    """

    X_HI = 1e4
    TAIL_TERMS = 40

    def __init__(self, beta: float, n_grid: int = 1500):
        self.beta = StableParams(beta).beta
        self.x_lo = self._left_edge()
        self.x_hi = self.X_HI
        log_x = np.linspace(math.log(self.x_lo), math.log(self.x_hi), n_grid)
        xs = np.exp(log_x)

        log_pdf = np.array([math.log(max(stable_density(beta, x), 1e-300)) for x in xs])
        self._log_pdf = CubicSpline(log_x, log_pdf)

        cdf = np.empty(n_grid)
        split = n_grid
        for i, x in enumerate(xs):
            cdf[i] = stable_cdf(beta, x)
            if cdf[i] > 0.5:
                split = i
                break
        sf = np.array([stable_sf(beta, x) for x in xs[split:]])
        left = slice(0, split + 1)
        self._log_cdf = CubicSpline(log_x[left], np.log(np.maximum(cdf[left], 1e-300)))
        self._log_sf = CubicSpline(log_x[split:], np.log(np.maximum(sf, 1e-300)))
        self._x_split = float(xs[split])

        k = np.arange(1, self.TAIL_TERMS + 1, dtype=float)
        sign = (-1.0) ** (k + 1.0)
        sin_term = np.sin(math.pi * k * beta)
        self._tail_k = k
        self._tail_pdf_coef = sign * np.exp(gammaln(k * beta + 1.0) - gammaln(k + 1.0)) * sin_term
        self._tail_sf_coef = sign * np.exp(gammaln(k * beta) - gammaln(k + 1.0)) * sin_term

    def _left_edge(self) -> float:
        lo, hi = -300.0, 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if stable_density(self.beta, 10.0**mid) < 1e-250:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-3:
                break
        return 10.0**hi

    def _tail_series(self, x: np.ndarray, coef: np.ndarray, shift: float) -> np.ndarray:
        powers = np.power.outer(x, -self.beta * self._tail_k)
        return (powers @ coef) / math.pi * x**shift

    def pdf(self, x: np.ndarray | float) -> np.ndarray | float:
        """Density w_β(x;1,1)."""
        arr = np.asarray(x, dtype=float)
        out = np.zeros_like(arr)
        mid = (arr >= self.x_lo) & (arr <= self.x_hi)
        out[mid] = np.exp(self._log_pdf(np.log(arr[mid])))
        tail = arr > self.x_hi
        out[tail] = self._tail_series(arr[tail], self._tail_pdf_coef, -1.0)
        return float(out) if np.ndim(x) == 0 else out

    def sf(self, x: np.ndarray | float) -> np.ndarray | float:
        """Survival function P[W > x]."""
        arr = np.asarray(x, dtype=float)
        out = np.ones_like(arr)
        upper = arr > self.x_hi
        out[upper] = self._tail_series(arr[upper], self._tail_sf_coef, 0.0)
        right = (arr > self._x_split) & ~upper
        out[right] = np.exp(self._log_sf(np.log(arr[right])))
        left = (arr >= self.x_lo) & (arr <= self._x_split)
        out[left] = -np.expm1(self._log_cdf(np.log(arr[left])))
        return float(out) if np.ndim(x) == 0 else out

    def cdf(self, x: np.ndarray | float) -> np.ndarray | float:
        """Distribution function P[W <= x]."""
        arr = np.asarray(x, dtype=float)
        out = np.zeros_like(arr)
        left = (arr >= self.x_lo) & (arr <= self._x_split)
        out[left] = np.exp(self._log_cdf(np.log(arr[left])))
        rest = arr > self._x_split
        out[rest] = 1.0 - np.asarray(self.sf(arr[rest]))
        return float(out) if np.ndim(x) == 0 else out

    def rule(
        self, upper: float = math.inf, breaks: tuple[float, ...] = (), order: int = 10
    ) -> tuple[np.ndarray, np.ndarray]:
        """Nodes x_i and weights v_i with Σ v_i h(x_i) ≈ ∫_0^upper h(x) w_β(x) dx.

        Gauss-Legendre panels in log x on [x_lo, min(upper, x_hi)], plus a rule
        in z = x^(-β) for the algebraic tail above x_hi. ``breaks`` are
        points where h may jump.
        """
        if upper <= self.x_lo:
            return np.empty(0), np.empty(0)
        top = min(upper, self.x_hi)
        edges = [math.log(self.x_lo)]
        edges += sorted(math.log(b) for b in breaks if self.x_lo < b < top)
        edges.append(math.log(top))
        y, wy = composite_gauss_legendre(edges, panel_width=0.5, order=order)
        x = np.exp(y)
        weights = wy * x * np.exp(self._log_pdf(y))
        if upper <= self.x_hi:
            return x, weights

        z_lo = 0.0 if math.isinf(upper) else upper ** (-self.beta)
        z_hi = self.x_hi ** (-self.beta)
        z_edges = [z_lo, *sorted(b ** (-self.beta) for b in breaks if b > self.x_hi), z_hi]
        zs, wz = [], []
        for lo, hi in zip(z_edges[:-1], z_edges[1:]):
            if hi > lo:
                zn, wn = gauss_legendre_on(lo, hi, 24)
                zs.append(zn)
                wz.append(wn)
        z = np.concatenate(zs)
        tail_x = z ** (-1.0 / self.beta)
        jac = tail_x / (self.beta * z)
        tail_w = np.concatenate(wz) * jac * self._tail_series(tail_x, self._tail_pdf_coef, -1.0)
        return np.concatenate([x, tail_x]), np.concatenate([weights, tail_w])

    def expect(self, h, upper: float = math.inf, breaks: tuple[float, ...] = ()) -> float:
        """∫_0^upper h(x) w_β(x) dx for a vectorized h."""
        x, weights = self.rule(upper, breaks)
        if x.size == 0:
            return 0.0
        return float(np.dot(weights, h(x)))


@lru_cache(maxsize=32)
def stable_law(beta: float) -> StableLaw:
    """Cached StableLaw for index ``beta``."""
    return StableLaw(beta)
