"""Monte Carlo engines for the RL, Caputo and mixed two-dimensional problems.

Each grid point is estimated from ``cfg.n_paths`` paths started there. All
grid points reuse the same master seed, so neighbouring estimates share
random numbers and the curve is smooth in t.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from fracflow.config import HypothesisThresholds, MonteCarloSettings
from fracflow.errors import DomainError, HorizonError, HorizonWarning, HypothesisWarning
from fracflow.kernels import JumpKernel, validate_hypotheses
from fracflow.paths import (
    KILLED,
    NS_EXIT,
    STOPPED,
    PathBatch,
    exit_times_stable_exact,
    simulate_mixed_paths,
    simulate_paths,
    stream,
)
from fracflow.results import McEstimate, SolutionCurve

CAPUTO = "caputo"
RL = "rl"
MIXED = "mixed"
RL_CAPUTO = "rl_caputo"
RL_RL = "rl_rl"

# Above this share of truncated paths an estimate is refused.
MAX_TRUNCATED_FRACTION = 0.05


@dataclass(frozen=True)
class ProblemSpec:
    """One linear problem instance.

    Attributes:
        kind: 'caputo', 'rl' or 'mixed'.
        kernel: Jump kernel (of the killed t1-coordinate for 'mixed').
        lam: Discount/spectral parameter λ >= 0.
        g: Source term, g(t) or g(t1, t2) for 'mixed'; None means 0.
        u_a: Boundary value of the Caputo problem; the RL problem forces 0.
        a, b: Interval [a, b] (for 'mixed', [0, b] in t1).
        kernel2: Kernel of the stopped t2-coordinate ('mixed' only).
        phi: Boundary data on t2 = 0 with φ(0) = 0 ('mixed' only).
        b2: Upper end of the t2-range ('mixed' only).
        variant: 'rl_caputo' or 'rl_rl' ('mixed' only).
        g_breaks: Points where g is discontinuous (1-D problems).
        thresholds: Hypothesis thresholds for the λ = 0 degeneracy warning.
    """

    kind: str
    kernel: JumpKernel
    lam: float = 0.0
    g: Callable | None = None
    u_a: float = 0.0
    a: float = 0.0
    b: float = 1.0
    kernel2: JumpKernel | None = None
    phi: Callable | None = None
    b2: float = 1.0
    variant: str = RL_CAPUTO
    g_breaks: tuple[float, ...] = ()
    thresholds: HypothesisThresholds = field(default_factory=HypothesisThresholds)

    def __post_init__(self):
        if self.kind not in (CAPUTO, RL, MIXED):
            raise DomainError(f"unknown problem kind '{self.kind}'")
        if not self.lam >= 0.0:
            raise DomainError(f"probabilistic engines need lambda >= 0, got {self.lam}")
        if not self.b > self.a:
            raise DomainError(f"interval must satisfy a < b, got [{self.a}, {self.b}]")
        if self.kind == RL and self.u_a != 0.0:
            raise DomainError("the RL problem has zero boundary data; u_a must be 0")
        if self.kind == MIXED:
            if self.kernel2 is None:
                raise DomainError("the mixed problem needs a second kernel")
            if self.variant not in (RL_CAPUTO, RL_RL):
                raise DomainError(f"unknown mixed variant '{self.variant}'")
            if self.phi is not None and abs(float(self.phi(0.0))) > 1e-12:
                raise DomainError(f"boundary data must vanish at 0, got phi(0) = {self.phi(0.0)}")


def _check_truncation(fraction: float, where: str) -> None:
    if fraction > MAX_TRUNCATED_FRACTION:
        raise HorizonError(
            f"{where}: {fraction:.1%} of paths reached the horizon "
            f"(limit {MAX_TRUNCATED_FRACTION:.0%}); raise the horizon or lambda"
        )
    if fraction > 0.0:
        warnings.warn(
            f"{where}: {fraction:.3%} of paths truncated at the horizon",
            HorizonWarning,
            stacklevel=3,
        )


def _warn_if_degenerate(spec: ProblemSpec) -> None:
    report = validate_hypotheses(spec.kernel, (spec.a, spec.b), thresholds=spec.thresholds)
    if not report.passed.get("h1", False):
        warnings.warn(
            f"{spec.kernel.label}: (H1) check failed, expected exit times may be infinite; "
            "running with the horizon policy. " + "; ".join(report.notes),
            HypothesisWarning,
            stacklevel=3,
        )


def _check_grid(grid: Sequence[float], a: float, b: float) -> list[float]:
    points = [float(t) for t in grid]
    for t in points:
        if not (a <= t <= b):
            raise DomainError(f"grid point {t} lies outside [{a}, {b}]")
    return points


def _run(spec: ProblemSpec, t: float, cfg: MonteCarloSettings, mode: str, g=None) -> PathBatch:
    return simulate_paths(spec.kernel, t, spec.a, cfg, mode=mode, lam=spec.lam, g=g)


def solve_rl_mc(
    spec: ProblemSpec, grid: Sequence[float], cfg: MonteCarloSettings
) -> SolutionCurve:
    """w(t) = E[∫_0^τ e^(-λs) g(T_t(s)) ds] with the killed process; w(a) = 0."""
    if spec.kind != RL:
        raise DomainError(f"solve_rl_mc needs an 'rl' problem, got '{spec.kind}'")
    points = _check_grid(grid, spec.a, spec.b)
    if spec.lam == 0.0:
        _warn_if_degenerate(spec)
    estimates = []
    for t in points:
        if t == spec.a or spec.g is None:
            estimates.append(McEstimate.exact(0.0, cfg.n_paths))
            continue
        batch = _run(spec, t, cfg, KILLED, spec.g)
        _check_truncation(batch.truncated_fraction, f"solve_rl_mc at t={t}")
        estimates.append(McEstimate.from_samples(batch.functional, batch.truncated_fraction))
    return SolutionCurve.from_estimates(points, estimates, method="mc")


def solve_caputo_mc(
    spec: ProblemSpec, grid: Sequence[float], cfg: MonteCarloSettings
) -> SolutionCurve:
    """u(t) = u_a·E[e^(-λτ)] + E[∫_0^τ e^(-λs) g(T_t(s)) ds], both terms from the same paths."""
    if spec.kind != CAPUTO:
        raise DomainError(f"solve_caputo_mc needs a 'caputo' problem, got '{spec.kind}'")
    points = _check_grid(grid, spec.a, spec.b)
    if spec.lam == 0.0:
        _warn_if_degenerate(spec)
    estimates = []
    for t in points:
        if t == spec.a:
            estimates.append(McEstimate.exact(spec.u_a, cfg.n_paths))
            continue
        if spec.g is None and spec.u_a == 0.0:
            estimates.append(McEstimate.exact(0.0, cfg.n_paths))
            continue
        batch = _run(spec, t, cfg, STOPPED, spec.g)
        _check_truncation(batch.truncated_fraction, f"solve_caputo_mc at t={t}")
        samples = spec.u_a * batch.discount(spec.lam) + batch.functional
        estimates.append(McEstimate.from_samples(samples, batch.truncated_fraction))
    return SolutionCurve.from_estimates(points, estimates, method="mc")


def solve_mixed_mc(
    spec: ProblemSpec, grid2d: Sequence[tuple[float, float]], cfg: MonteCarloSettings
) -> SolutionCurve:
    """Mixed problem: RL-type in t1 (killed at 0), Caputo-type in t2 (stopped at 0).

    u = E[e^(-λτ2) φ(T1(τ2)) 1{τ2 < τ1}] + E[∫_0^τ e^(-λs) g(T1(s), T2(s)) ds].
    The 'rl_rl' variant kills both coordinates and drops the φ term. Exits of
    both coordinates within one step count as exits through t1 = 0; their
    share is returned in ``tie_fractions``.
    """
    if spec.kind != MIXED:
        raise DomainError(f"solve_mixed_mc needs a 'mixed' problem, got '{spec.kind}'")
    phi = spec.phi if spec.variant == RL_CAPUTO else None
    points: list[tuple[float, float]] = []
    estimates = []
    ties = []
    for t1, t2 in grid2d:
        t1, t2 = float(t1), float(t2)
        if not (0.0 <= t1 <= spec.b and 0.0 <= t2 <= spec.b2):
            raise DomainError(f"grid point ({t1}, {t2}) lies outside the rectangle")
        points.append((t1, t2))
        if t1 == 0.0:
            estimates.append(McEstimate.exact(0.0, cfg.n_paths))
            ties.append(0.0)
            continue
        if t2 == 0.0:
            boundary = float(phi(t1)) if phi is not None else 0.0
            estimates.append(McEstimate.exact(boundary, cfg.n_paths))
            ties.append(0.0)
            continue
        batch = simulate_mixed_paths(
            spec.kernel, spec.kernel2, t1, t2, cfg, lam=spec.lam, g=spec.g, phi=phi
        )
        _check_truncation(batch.truncated_fraction, f"solve_mixed_mc at ({t1}, {t2})")
        samples = batch.functional + batch.boundary_term
        estimates.append(McEstimate.from_samples(samples, batch.truncated_fraction))
        ties.append(batch.tie_fraction)
    curve = SolutionCurve.from_estimates(points, estimates, method="mc")
    curve.tie_fractions = ties
    return curve


def exit_time_samples(
    k: JumpKernel, t: float, a: float, cfg: MonteCarloSettings
) -> tuple[np.ndarray, np.ndarray]:
    """Exit-time draws and exit flags: exact for pure stable kernels, simulated otherwise."""
    exact = k.exact_stable
    if exact is not None:
        beta, rate = exact
        n_blocks = math.ceil(cfg.n_paths / cfg.block_size)
        taus = np.concatenate([
            exit_times_stable_exact(
                beta, t, a,
                min(cfg.block_size, cfg.n_paths - j * cfg.block_size),
                stream(cfg.master_seed, j, NS_EXIT), rate,
            )
            for j in range(n_blocks)
        ])
        return taus, np.ones(taus.size, dtype=bool)
    batch = simulate_paths(k, t, a, cfg, mode=KILLED, lam=0.0)
    return batch.exit_time, batch.exited


def laplace_exit_mc(
    k: JumpKernel, lam: float, t: float, a: float, cfg: MonteCarloSettings
) -> McEstimate:
    """E[e^(-λτ)]: exact τ sampler for pure stable kernels, path simulation otherwise."""
    if lam < 0.0:
        raise DomainError(f"discount rate must be nonnegative, got {lam}")
    if t < a:
        raise DomainError(f"start {t} lies below the barrier {a}")
    if t == a or (lam == 0.0 and k.exact_stable is not None):
        return McEstimate.exact(1.0, cfg.n_paths)
    if k.exact_stable is not None:
        taus, _ = exit_time_samples(k, t, a, cfg)
        return McEstimate.from_samples(np.exp(-lam * taus))
    batch = simulate_paths(k, t, a, cfg, mode=KILLED, lam=lam)
    _check_truncation(batch.truncated_fraction, f"laplace_exit_mc at t={t}")
    return McEstimate.from_samples(batch.discount(lam), batch.truncated_fraction)


def laplace_exit_mixed_mc(
    k1: JumpKernel, k2: JumpKernel, lam: float, t1: float, t2: float, cfg: MonteCarloSettings
) -> McEstimate:
    """E[e^(-λ min(τ1, τ2))] for independent coordinates started at (t1, t2)."""
    if lam < 0.0:
        raise DomainError(f"discount rate must be nonnegative, got {lam}")
    if t1 == 0.0 or t2 == 0.0:
        return McEstimate.exact(1.0, cfg.n_paths)
    batch = simulate_mixed_paths(k1, k2, t1, t2, cfg, lam=lam)
    _check_truncation(batch.truncated_fraction, f"laplace_exit_mixed_mc at ({t1}, {t2})")
    samples = np.where(batch.exited, np.exp(-lam * batch.exit_time), 0.0)
    return McEstimate.from_samples(samples, batch.truncated_fraction)
