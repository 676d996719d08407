"""Jump kernels ν(t, r) and the generalized Caputo/RL-type operators they define.

Every supported family is a finite sum of stable-like terms

    ν(t, r) = Σ_i ω_i(t) β_i(t) / (Γ(1 - β_i(t)) r^(1 + β_i(t))),

so tail mass, small-jump moment and a Pareto envelope are available in
closed form for all of them. Constructors differ only in how the terms are
assembled.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rgamma

from fracflow.config import HypothesisThresholds
from fracflow.errors import DomainError, QuadratureError
from fracflow.quadrature import integrate

ScalarFn = Callable[[float], float]

N_PROBES = 257
# Headroom on probed suprema of non-constant weights and on the envelope constant.
WEIGHT_HEADROOM = 1.02
ENVELOPE_HEADROOM = 1.001


def vectorized(fn: Callable) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a user callable so it maps arrays to arrays of the same shape."""

    def call(t):
        arr = np.asarray(t, dtype=float)
        try:
            out = np.asarray(fn(arr), dtype=float)
        except (TypeError, ValueError):
            out = None
        if out is not None:
            if out.shape == arr.shape:
                return out
            if out.ndim == 0:
                return np.full(arr.shape, float(out))
        return np.vectorize(lambda s: float(fn(s)), otypes=[float])(arr)

    return call


def vectorized2(fn: Callable) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Two-argument version of ``vectorized``; inputs must share one shape."""

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        try:
            out = np.asarray(fn(x, y), dtype=float)
        except (TypeError, ValueError):
            out = None
        if out is not None:
            if out.shape == x.shape:
                return out
            if out.ndim == 0:
                return np.full(x.shape, float(out))
        return np.vectorize(lambda u, v: float(fn(u, v)), otypes=[float])(x, y)

    return call


def _envelope_constant(lo: float, hi: float) -> float:
    """max of β/Γ(1-β) over [lo, hi]."""
    if lo == hi:
        return float(lo * rgamma(1.0 - lo))
    grid = np.linspace(lo, hi, N_PROBES)
    return float(np.max(grid * rgamma(1.0 - grid))) * ENVELOPE_HEADROOM


@dataclass(frozen=True)
class StableTerm:
    """One term ω(t)·β(t)/(Γ(1-β(t)) r^(1+β(t))) of a jump kernel.

    Attributes:
        weight: Vectorized ω(t) >= 0.
        order: Vectorized β(t) in (0, 1).
        weight_sup: Upper bound of ω on the working interval.
        order_lo, order_hi: Compact range containing β(t) on the working interval.
        constant_weight, constant_order: Set when ω or β does not depend on t.
    """

    weight: Callable[[np.ndarray], np.ndarray]
    order: Callable[[np.ndarray], np.ndarray]
    weight_sup: float
    order_lo: float
    order_hi: float
    constant_weight: float | None = None
    constant_order: float | None = None

    def density(self, t: np.ndarray, r: np.ndarray) -> np.ndarray:
        w = self.weight(t)
        b = self.order(t)
        return w * b * rgamma(1.0 - b) * r ** (-1.0 - b)

    def tail(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        w = self.weight(t)
        b = self.order(t)
        return w * rgamma(1.0 - b) * x ** (-b)

    def small_moment(self, t: np.ndarray, eps: float) -> np.ndarray:
        w = self.weight(t)
        b = self.order(t)
        return w * b * rgamma(2.0 - b) * eps ** (1.0 - b)

    def envelope_pieces(self) -> list[tuple[float, float]]:
        """(coefficient, exponent q) pairs of the Pareto pieces C·r^(-1-q)."""
        c = self.weight_sup * _envelope_constant(self.order_lo, self.order_hi)
        if self.order_lo == self.order_hi:
            return [(c, self.order_lo)]
        return [(c, self.order_lo), (c, self.order_hi)]


@dataclass(frozen=True)
class JumpKernel:
    """Jump intensity ν(t, r) defining the operators -D_{a+*}^(ν) and -D_{a+}^(ν).

    All methods accept scalars or numpy arrays (broadcast together) and
    return floats for scalar input.
    """

    terms: tuple[StableTerm, ...]
    label: str
    t_range: tuple[float, float] = (0.0, 1.0)
    _pieces: tuple[tuple[float, float], ...] = field(init=False, repr=False)

    def __post_init__(self):
        pieces = tuple(p for term in self.terms for p in term.envelope_pieces())
        object.__setattr__(self, "_pieces", pieces)

    def nu(self, t, r):
        """Jump intensity density ν(t, r); 0 for r <= 0."""
        t_arr, r_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        positive = r_arr > 0.0
        safe_r = np.where(positive, r_arr, 1.0)
        total = sum(term.density(t_arr, safe_r) for term in self.terms)
        return _scalar_or(np.where(positive, total, 0.0), t, r)

    def tail_mass(self, t, x):
        """∫_x^∞ ν(t, r) dr, in closed form."""
        t_arr, x_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        if np.any(x_arr <= 0.0):
            raise DomainError("tail mass needs x > 0")
        total = sum(term.tail(t_arr, x_arr) for term in self.terms)
        return _scalar_or(total, t, x)

    def small_jump_moment(self, t, eps: float):
        """∫_0^eps r ν(t, r) dr, the drift replacing jumps smaller than eps."""
        t_arr = np.asarray(t, float)
        total = sum(term.small_moment(t_arr, eps) for term in self.terms)
        return float(total) if np.ndim(t) == 0 else total

    def envelope(self, r):
        """Pareto bound with ν(t, r) <= envelope(r) for t in the working interval."""
        r_arr = np.asarray(r, float)
        total = sum(c * r_arr ** (-1.0 - q) for c, q in self._pieces)
        return float(total) if np.ndim(r) == 0 else total

    def envelope_tail_mass(self, eps: float) -> float:
        """∫_eps^∞ envelope(r) dr."""
        return math.fsum(c * eps ** (-q) / q for c, q in self._pieces)

    def sample_envelope(self, rng: np.random.Generator, eps: float, n: int) -> np.ndarray:
        """Draw n jump sizes from the normalized envelope restricted to r >= eps."""
        masses = np.array([c * eps ** (-q) / q for c, q in self._pieces])
        exponents = np.array([q for _, q in self._pieces])
        piece = rng.choice(len(masses), size=n, p=masses / masses.sum())
        u = rng.random(n)
        return eps * (1.0 - u) ** (-1.0 / exponents[piece])

    @property
    def exact_stable(self) -> tuple[float, float] | None:
        """(β, c) when ν = c·β/(Γ(1-β) r^(1+β)) with constant c and β, else None."""
        if len(self.terms) != 1:
            return None
        term = self.terms[0]
        if term.constant_weight is None or term.constant_order is None:
            return None
        if term.constant_weight <= 0.0:
            return None
        return term.constant_order, term.constant_weight

    @property
    def order_range(self) -> tuple[float, float]:
        return (
            min(term.order_lo for term in self.terms),
            max(term.order_hi for term in self.terms),
        )

    def expected_exit_bound(self, length: float) -> float:
        """Upper bound on E[τ] from starting points within ``length`` of the barrier.

        Each unit of time the process jumps past the barrier with rate at
        least the smallest tail mass at ``length``; its reciprocal bounds E[τ].
        """
        t = np.linspace(*self.t_range, N_PROBES)
        rate = float(np.min(self.tail_mass(t, np.full_like(t, max(length, 1e-12)))))
        return math.inf if rate <= 0.0 else 1.0 / rate


def _scalar_or(values: np.ndarray, *inputs) -> np.ndarray | float:
    if all(np.ndim(v) == 0 for v in inputs):
        return float(values)
    return values


def _probe_grid(t_range: tuple[float, float]) -> np.ndarray:
    lo, hi = t_range
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise DomainError(f"working interval must be finite, got {t_range}")
    return np.linspace(lo, hi, N_PROBES)


def _make_term(
    weight: Callable,
    order: Callable,
    t_range: tuple[float, float],
    order_bounds: tuple[float, float] | None = None,
    order_deriv: Callable | None = None,
) -> StableTerm:
    grid = _probe_grid(t_range)
    weight_fn = vectorized(weight)
    order_fn = vectorized(order)
    w = weight_fn(grid)
    b = order_fn(grid)
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("kernel weight must be finite and nonnegative on the working interval")
    if not np.all(np.isfinite(b)) or np.any(b <= 0.0) or np.any(b >= 1.0):
        raise DomainError("kernel order must lie in (0, 1) on the working interval")

    constant_w = float(w[0]) if np.ptp(w) == 0.0 else None
    constant_b = float(b[0]) if np.ptp(b) == 0.0 else None
    weight_sup = constant_w if constant_w is not None else float(w.max()) * WEIGHT_HEADROOM

    if constant_b is not None:
        lo = hi = constant_b
    else:
        lo, hi = float(b.min()), float(b.max())
        if order_deriv is not None:
            # β may move by at most sup|β'|·spacing/2 between probes.
            slack = float(np.max(np.abs(vectorized(order_deriv)(grid)))) * (grid[1] - grid[0]) / 2
            lo, hi = lo - slack, hi + slack
    if order_bounds is not None:
        b_lo, b_hi = order_bounds
        if not (0.0 < b_lo <= b_hi < 1.0):
            raise DomainError(f"declared order range must lie inside (0, 1), got {order_bounds}")
        if lo < b_lo - 1e-12 or hi > b_hi + 1e-12:
            raise DomainError(
                f"kernel order leaves the declared range [{b_lo}, {b_hi}] "
                f"(probed [{lo:.6g}, {hi:.6g}])"
            )
        lo, hi = (lo, hi) if constant_b is not None else (b_lo, b_hi)
    lo, hi = max(lo, 1e-12), min(hi, 1.0 - 1e-12)

    return StableTerm(
        weight=weight_fn,
        order=order_fn,
        weight_sup=weight_sup,
        order_lo=lo,
        order_hi=hi,
        constant_weight=constant_w,
        constant_order=constant_b,
    )


# ─── Constructors ────────────────────────────────────────────────────────────


def kernel_stable(beta: float, t_range: tuple[float, float] = (0.0, 1.0)) -> JumpKernel:
    """Classical kernel ν(r) = β / (Γ(1-β) r^(1+β)) of the order-β Caputo/RL derivatives."""
    if not (0.0 < beta < 1.0):
        raise DomainError(f"stable index must lie in (0, 1), got {beta}")
    term = _make_term(lambda t: 1.0, lambda t: beta, t_range)
    return JumpKernel((term,), label=f"stable(beta={beta})", t_range=t_range)


def kernel_multi_term(
    weights: Sequence[Callable | float],
    betas: Sequence[float],
    t_range: tuple[float, float] = (0.0, 1.0),
) -> JumpKernel:
    """Multi-term kernel Σ_i ω_i(t)·β_i/(Γ(1-β_i) r^(1+β_i)).

    Args:
        weights: Callables ω_i(t) >= 0, or constants.
        betas: Orders β_i in (0, 1), one per weight.
        t_range: Working interval on which weights are probed.
    """
    if not weights or len(weights) != len(betas):
        raise DomainError("multi-term kernel needs nonempty weights and betas of equal length")
    terms = []
    for weight, beta in zip(weights, betas):
        if not (0.0 < beta < 1.0):
            raise DomainError(f"stable index must lie in (0, 1), got {beta}")
        fn = weight if callable(weight) else _constant(float(weight))
        terms.append(_make_term(fn, _constant(beta), t_range))
    label = "multi_term(" + ", ".join(f"{b}" for b in betas) + ")"
    return JumpKernel(tuple(terms), label=label, t_range=t_range)


def kernel_variable_order(
    beta_fn: Callable,
    beta_fn_deriv: Callable | None = None,
    *,
    beta_range: tuple[float, float] | None = None,
    t_range: tuple[float, float] = (0.0, 1.0),
) -> JumpKernel:
    """Position-dependent order ν(t, r) = β(t)/(Γ(1-β(t)) r^(1+β(t))).

    Args:
        beta_fn: β(t), continuously differentiable with values in (0, 1).
        beta_fn_deriv: Optional β'(t); widens the probed order range so the
            envelope covers β between probe points.
        beta_range: Declared compact range [β_lo, β_hi]; probed values outside
            it are a DomainError.
        t_range: Working interval.
    """
    term = _make_term(lambda t: 1.0, beta_fn, t_range, beta_range, beta_fn_deriv)
    return JumpKernel(
        (term,),
        label=f"variable_order(beta in [{term.order_lo:.4g}, {term.order_hi:.4g}])",
        t_range=t_range,
    )


def kernel_distributed(
    weight: Callable[[float, float], float],
    order: Callable[[float, float], float],
    measure_nodes: Sequence[tuple[float, float]],
    t_range: tuple[float, float] = (0.0, 1.0),
) -> JumpKernel:
    """Distributed-order kernel, ∫ ω(s,t) β(s,t)/(Γ(1-β(s,t)) r^(1+β(s,t))) μ(ds).

    The μ(ds) integral is discretized on the supplied (s_j, m_j) nodes.
    """
    if not measure_nodes:
        raise DomainError("distributed kernel needs at least one measure node")
    terms = []
    for s, m in measure_nodes:
        if m < 0.0:
            raise DomainError(f"measure node weight must be nonnegative, got {m} at s={s}")
        terms.append(
            _make_term(_bind_node(weight, s, m), _bind_node(order, s, 1.0), t_range)
        )
    return JumpKernel(
        tuple(terms), label=f"distributed({len(measure_nodes)} nodes)", t_range=t_range
    )


def _constant(value: float) -> ScalarFn:
    return lambda t: value


def _bind_node(fn: Callable[[float, float], float], s: float, scale: float) -> Callable:
    def bound(t):
        arr = np.asarray(t, dtype=float)
        try:
            out = np.asarray(fn(s, arr), dtype=float)
            if out.shape == arr.shape or out.ndim == 0:
                return scale * np.broadcast_to(out, arr.shape)
        except (TypeError, ValueError):
            pass
        return scale * np.vectorize(lambda x: float(fn(s, x)), otypes=[float])(arr)

    return bound


# ─── Operators ───────────────────────────────────────────────────────────────


def _jump_integral(
    k: JumpKernel, h: ScalarFn, t: float, length: float, points: Sequence[float] | None
) -> float:
    """∫_0^length (h(t-r) - h(t)) ν(t, r) dr in the variable v = log r."""
    h_t = h(t)

    def integrand(v: float) -> float:
        r = math.exp(v)
        return (h(t - r) - h_t) * k.nu(t, r) * r

    breaks = [math.log(t - p) for p in (points or ()) if t - length < p < t]
    return integrate(
        integrand, -math.inf, math.log(length), points=breaks, epsabs=1e-10, epsrel=1e-9,
        limit=400, label=f"jump integral of {k.label}", node=t,
    )


def apply_caputo_operator(
    k: JumpKernel, h: ScalarFn, a: float, t: float, points: Sequence[float] | None = None
) -> float:
    """-D_{a+*}^(ν) h(t): jumps past a land exactly on a.

    ∫_0^(t-a) (h(t-r) - h(t)) ν(t,r) dr + (h(a) - h(t))·tail_mass(t, t-a).

    Args:
        points: Optional locations in (a, t) where h is not smooth.
    """
    if not t > a:
        raise DomainError(f"operator needs t > a, got t={t}, a={a}")
    length = t - a
    return _jump_integral(k, h, t, length, points) + (h(a) - h(t)) * k.tail_mass(t, length)


def apply_rl_operator(
    k: JumpKernel, h: ScalarFn, a: float, t: float, points: Sequence[float] | None = None
) -> float:
    """-D_{a+}^(ν) h(t): paths jumping past a are killed.

    ∫_0^(t-a) (h(t-r) - h(t)) ν(t,r) dr - h(t)·tail_mass(t, t-a).
    """
    if not t > a:
        raise DomainError(f"operator needs t > a, got t={t}, a={a}")
    length = t - a
    return _jump_integral(k, h, t, length, points) - h(t) * k.tail_mass(t, length)


# ─── Hypothesis probes ───────────────────────────────────────────────────────


@dataclass
class H0Report:
    """Numerical probes of the regularity (H0) and non-degeneracy (H1) conditions.

    Advisory: a pass is evidence, not proof.
    """

    sup_first_moment: float = 0.0
    sup_dt_first_moment: float = 0.0
    small_jump_limit: float = 0.0
    small_jump_rate: float = 0.0
    h1_delta: float = 0.0
    h1_epsilon: float = 0.0
    passed: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.passed) and all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "sup_first_moment": self.sup_first_moment,
            "sup_dt_first_moment": self.sup_dt_first_moment,
            "small_jump_limit": self.small_jump_limit,
            "small_jump_rate": self.small_jump_rate,
            "h1_delta": self.h1_delta,
            "h1_epsilon": self.h1_epsilon,
            **{f"pass_{name}": flag for name, flag in self.passed.items()},
        }


def _first_moment(k: JumpKernel, t: float, upper: float) -> float:
    """∫_0^upper r ν(t, r) dr."""
    return integrate(
        lambda v: k.nu(t, math.exp(v)) * math.exp(2.0 * v),
        -math.inf, math.log(upper), epsabs=1e-12, epsrel=1e-9,
        label=f"first moment of {k.label}", node=t,
    )


def validate_hypotheses(
    k: JumpKernel,
    t_range: tuple[float, float] | None = None,
    probes: tuple[int, int] = (9, 6),
    thresholds: HypothesisThresholds | None = None,
) -> H0Report:
    """Probe the moment, t-derivative, small-jump and (H1) clauses of a kernel.

    Args:
        k: Kernel to probe.
        t_range: Working interval [a, b]; defaults to the kernel's.
        probes: (number of t probes, number of δ-ladder rungs).
        thresholds: Pass/fail thresholds.

    Returns:
        An H0Report. Quadrature failures mark the clause as failed and are
        described in ``notes``; nothing is raised.
    """
    a, b = t_range or k.t_range
    thresholds = thresholds or HypothesisThresholds()
    n_t, n_delta = probes
    length = b - a
    if not (math.isfinite(length) and length > 0.0):
        raise DomainError(f"working interval must be finite and nonempty, got [{a}, {b}]")
    ts = np.linspace(a, b, max(n_t, 2))
    r_max = 10.0 * length
    report = H0Report()

    try:
        moments = [_first_moment(k, float(t), r_max) for t in ts]
        report.sup_first_moment = max(moments)
        report.passed["first_moment"] = report.sup_first_moment <= thresholds.moment_ceiling
    except QuadratureError as exc:
        report.passed["first_moment"] = False
        report.notes.append(f"first moment: {exc}")

    try:
        dt = 1e-4 * length
        slopes = []
        for t in ts:
            lo, hi = max(a, t - dt), min(b, t + dt)
            slopes.append(
                abs(_first_moment(k, hi, r_max) - _first_moment(k, lo, r_max)) / (hi - lo)
            )
        report.sup_dt_first_moment = max(slopes)
        report.passed["dt_first_moment"] = report.sup_dt_first_moment <= thresholds.moment_ceiling
    except QuadratureError as exc:
        report.passed["dt_first_moment"] = False
        report.notes.append(f"t-derivative of first moment: {exc}")

    try:
        deltas = length * 10.0 ** -np.arange(1, n_delta + 1, dtype=float)
        ladder = np.array([max(_first_moment(k, float(t), d) for t in ts) for d in deltas])
        report.small_jump_limit = float(ladder[-1])
        if ladder[-1] == 0.0:
            report.small_jump_rate = math.inf
        elif ladder[0] > 0.0:
            fit = np.polyfit(np.log(deltas), np.log(np.maximum(ladder, 1e-300)), 1)
            report.small_jump_rate = float(fit[0])
        monotone = bool(np.all(np.diff(ladder) <= 1e-12 * max(ladder[0], 1.0)))
        report.passed["small_jumps"] = (
            monotone and report.small_jump_rate >= thresholds.small_jump_tol
        )
    except QuadratureError as exc:
        report.passed["small_jumps"] = False
        report.notes.append(f"small-jump ladder: {exc}")

    eps = thresholds.epsilon_fraction * length
    radii = eps * np.logspace(-6.0, 0.0, 13)
    t_grid, r_grid = np.meshgrid(ts, radii, indexing="ij")
    values = np.asarray(k.nu(t_grid, r_grid))
    report.h1_epsilon = eps
    report.h1_delta = max(0.0, float(values.min()))
    report.passed["h1"] = report.h1_delta > thresholds.h1_floor
    if not report.passed["h1"]:
        worst = float(t_grid.flat[int(np.argmin(values))])
        report.notes.append(
            f"(H1) fails: nu(t, r) vanishes near r = 0 at t = {worst:.6g} "
            f"(min over r <= {eps:.3g} is {report.h1_delta:.3g})"
        )
    return report
