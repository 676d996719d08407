"""Simulation of the decreasing processes behind the generalized operators.

A path starts at t0 and moves down by jumps. The stopped variant lands on
the barrier a at its first crossing attempt (Caputo type); the killed
variant is terminated there (RL type). Both accumulate the discounted
functional ∫_0^τ e^(-λs) g(T(s)) ds with left-point evaluation of g.

Randomness is organised in blocks of ``block_size`` consecutive path
indices. Block j of namespace n draws from a Philox stream keyed by
SeedSequence(master_seed, spawn_key=(n, j)), so a path's trajectory depends
only on the master seed and its index, whatever the worker count.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from fracflow.config import MonteCarloSettings
from fracflow.errors import DomainError, HorizonError, HorizonWarning, HypothesisWarning
from fracflow.kernels import JumpKernel, vectorized, vectorized2
from fracflow.special_fn import StableParams, kanter_log_a, stable_cdf, stable_density

STOPPED = "stopped"
KILLED = "killed"
MAX_STEPS = 10_000_000

# Stream namespaces; the mixed solver gives each coordinate its own.
NS_PATH = 0
NS_EXIT = 1
NS_COORD1 = 2
NS_COORD2 = 3


def stream(master_seed: int, block_index: int, namespace: int = NS_PATH) -> np.random.Generator:
    """Counter-based generator for one block of paths."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(namespace, block_index))
    return np.random.Generator(np.random.Philox(seq))


# ─── Exact stable samplers ───────────────────────────────────────────────────


def stable_draws(beta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws of W_β(1,1), Laplace transform exp(-λ^β).

    Kanter's form of the Chambers-Mallows-Stuck transformation:
    W = (A(U) / E)^((1-β)/β) with U uniform on (0, π), E standard exponential.
    """
    u = np.pi * (1.0 - rng.random(n))
    e = rng.standard_exponential(n)
    log_w = (kanter_log_a(beta, u) - np.log(e)) * ((1.0 - beta) / beta)
    return np.exp(log_w)


def sample_stable_increment(beta: float, ds: float, rng_stream: np.random.Generator) -> float:
    """One increment of the β-stable subordinator over a step ds: ds^(1/β)·W."""
    StableParams(beta)
    if not ds > 0.0:
        raise DomainError(f"step must be positive, got {ds}")
    return float(ds ** (1.0 / beta) * stable_draws(beta, 1, rng_stream)[0])


def exit_times_stable_exact(
    beta: float, t: float, a: float, n: int, rng: np.random.Generator, rate: float = 1.0
) -> np.ndarray:
    """n exact exit times τ = ((t-a)/W)^β / rate of the stable process started at t."""
    if t < a:
        raise DomainError(f"start {t} lies below the barrier {a}")
    if t == a:
        return np.zeros(n)
    return ((t - a) / stable_draws(beta, n, rng)) ** beta / rate


def sample_exit_time_stable_exact(
    beta: float, t: float, a: float, rng_stream: np.random.Generator
) -> float:
    """Exact draw of the first exit time below a for the β-stable kernel."""
    StableParams(beta)
    return float(exit_times_stable_exact(beta, t, a, 1, rng_stream)[0])


# ─── Stable-case densities ───────────────────────────────────────────────────


def transition_density_stable(beta: float, s: float, t: float, r: float) -> float:
    """p_s(t, r) = s^(-1/β) w_β(s^(-1/β)(t - r)), density of T(s) = r given T(0) = t."""
    if s <= 0.0 or r >= t:
        return 0.0
    scale = s ** (-1.0 / beta)
    return scale * stable_density(beta, scale * (t - r))


def exit_time_density_stable(beta: float, t: float, a: float, s: float) -> float:
    """Density of the exit time, (1/β)(t-a) s^(-1/β-1) w_β((t-a) s^(-1/β)).

    Underflows to 0 for extreme s.
    """
    if not t > a:
        raise DomainError(f"exit-time density needs t > a, got t={t}, a={a}")
    if s <= 0.0:
        return 0.0
    x = (t - a) * s ** (-1.0 / beta)
    return (t - a) * s ** (-1.0 / beta - 1.0) * stable_density(beta, x) / beta


def exit_time_survival_stable(beta: float, t: float, a: float, s: float) -> float:
    """P[τ > s] = F_β((t-a) s^(-1/β))."""
    if t <= a:
        return 0.0
    if s <= 0.0:
        return 1.0
    return stable_cdf(beta, (t - a) * s ** (-1.0 / beta))


def expected_exit_time_stable(beta: float, t: float, a: float) -> float:
    """E[τ] = (t-a)^β / Γ(1+β)."""
    StableParams(beta)
    return max(t - a, 0.0) ** beta / float(gamma(1.0 + beta))


def joint_density_stable(beta: float, t: float, a: float, s: float, r: float, xi: float) -> float:
    """Joint density of (T(s), τ) at (r, ξ): p_s(t, r)·μ_a^r(ξ - s) for s < ξ, a < r < t."""
    if s >= xi or r <= a or r >= t:
        return 0.0
    return transition_density_stable(beta, s, t, r) * exit_time_density_stable(beta, r, a, xi - s)


def exit_time_density_mixed_stable(
    beta1: float, beta2: float, t1: float, t2: float, s: float
) -> float:
    """Density of min(τ1, τ2) for independent coordinates started at (t1, t2), barriers 0."""
    if s <= 0.0:
        return 0.0
    return exit_time_density_stable(beta1, t1, 0.0, s) * exit_time_survival_stable(
        beta2, t2, 0.0, s
    ) + exit_time_density_stable(beta2, t2, 0.0, s) * exit_time_survival_stable(
        beta1, t1, 0.0, s
    )


# ─── Path simulation ─────────────────────────────────────────────────────────


@dataclass
class PathSample:
    """One simulated trajectory.

    Attributes:
        times: Clock values s_k = k·ds.
        states: T(s_k), nonincreasing; the stopped variant ends on a.
        exit_time: Estimate of τ, the crossing step count times ds.
        exited: Whether the barrier was crossed before the horizon.
        functional: ∫_0^τ e^(-λs) g(T(s)) ds (up to the horizon if not exited).
    """

    times: np.ndarray
    states: np.ndarray
    exit_time: float
    exited: bool
    functional: float


@dataclass
class ExitTimeSample:
    tau: float
    state_at_query: float | None = None


@dataclass
class PathBatch:
    """Per-path outcomes of a simulation run, in path-index order."""

    exit_time: np.ndarray
    exited: np.ndarray
    functional: np.ndarray
    final_state: np.ndarray
    state_at_query: np.ndarray | None = None
    trajectories: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return int(self.exit_time.size)

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(~self.exited)) if self.n_paths else 0.0

    def discount(self, lam: float) -> np.ndarray:
        """e^(-λτ̂) for exited paths, 0 for truncated ones."""
        return np.where(self.exited, np.exp(-lam * self.exit_time), 0.0)

    def exit_samples(self) -> list[ExitTimeSample]:
        query = self.state_at_query
        return [
            ExitTimeSample(float(tau), None if query is None else float(query[i]))
            for i, tau in enumerate(self.exit_time)
        ]


class Stepper:
    """Draws the per-step decrease of one coordinate.

    Pure stable kernels (constant weight c and order β) use exact increments
    (c·ds)^(1/β)·W. Other kernels use frozen-coefficient thinning: jumps of
    size >= eps arrive as Poisson proposals from the Pareto envelope, accepted
    with probability ν(t, r)/envelope(r); smaller jumps become the drift
    ds·∫_0^eps r ν(t, r) dr.
    """

    def __init__(self, kernel: JumpKernel, ds: float, eps: float):
        if not ds > 0.0:
            raise DomainError(f"step must be positive, got {ds}")
        self.kernel = kernel
        self.ds = ds
        self.eps = eps
        exact = kernel.exact_stable
        self.exact_beta = exact[0] if exact else None
        self.exact_scale = (exact[1] * ds) ** (1.0 / exact[0]) if exact else 0.0
        self.proposal_rate = 0.0 if exact else kernel.envelope_tail_mass(eps) * ds
        self._warned = False

    def increments(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        m = states.size
        if self.exact_beta is not None:
            return self.exact_scale * stable_draws(self.exact_beta, m, rng)

        counts = rng.poisson(self.proposal_rate, size=m)
        drift = self.ds * np.asarray(self.kernel.small_jump_moment(states, self.eps))
        total = int(counts.sum())
        if total == 0:
            return drift
        sizes = self.kernel.sample_envelope(rng, self.eps, total)
        owner = np.repeat(np.arange(m), counts)
        ratio = np.asarray(self.kernel.nu(states[owner], sizes)) / self.kernel.envelope(sizes)
        if not self._warned and np.any(ratio > 1.0 + 1e-9):
            self._warned = True
            warnings.warn(
                f"{self.kernel.label}: intensity exceeded its envelope during thinning; "
                "states probably left the kernel's working interval",
                HypothesisWarning,
                stacklevel=2,
            )
        accepted = rng.random(total) < ratio
        return drift + np.bincount(owner, weights=sizes * accepted, minlength=m)


def discount_weights(lam: float, ds: float, n_steps: int) -> np.ndarray:
    """Exact ∫ e^(-λs) ds over each step [k·ds, (k+1)·ds)."""
    if lam == 0.0:
        return np.full(n_steps, ds)
    k = np.arange(n_steps, dtype=float)
    return np.exp(-lam * ds * k) * (-math.expm1(-lam * ds) / lam)


def resolve_horizon(
    kernel: JumpKernel, t0: float, a: float, lam: float, cfg: MonteCarloSettings
) -> float:
    """Simulation horizon: 50/λ for λ > 0, else 50 times a bound on E[τ]."""
    if cfg.horizon_override is not None:
        return float(cfg.horizon_override)
    if lam > 0.0:
        return cfg.horizon_factor / lam
    exact = kernel.exact_stable
    if exact is not None:
        beta, c = exact
        bound = expected_exit_time_stable(beta, t0, a) / c
    else:
        bound = kernel.expected_exit_bound(t0 - a)
    if not math.isfinite(bound):
        warnings.warn(
            f"{kernel.label}: no finite bound on the expected exit time; "
            f"using horizon {cfg.horizon_factor}",
            HorizonWarning,
            stacklevel=2,
        )
        return cfg.horizon_factor
    return cfg.horizon_factor * max(bound, cfg.ds)


def _epsilon(kernel: JumpKernel, t0: float, a: float, cfg: MonteCarloSettings) -> float:
    return cfg.epsilon_fraction * max(kernel.t_range[1] - a, t0 - a)


def _n_steps(horizon: float, ds: float) -> int:
    n = math.ceil(horizon / ds)
    if n > MAX_STEPS:
        raise HorizonError(f"horizon {horizon} needs {n} steps of size {ds}; reduce it or raise ds")
    return max(n, 1)


def _run_block(
    stepper: Stepper,
    t0: float,
    a: float,
    n: int,
    rng: np.random.Generator,
    weights: np.ndarray,
    g: Callable[[np.ndarray], np.ndarray] | None,
    mode: str,
    query_step: int | None,
    record: int,
) -> tuple[np.ndarray, ...]:
    ds = stepper.ds
    state = np.full(n, float(t0))
    functional = np.zeros(n)
    exit_step = np.full(n, -1, dtype=np.int64)
    at_query = None if query_step is None else np.full(n, float(a))
    alive = np.flatnonzero(state > a)
    exit_step[state <= a] = -2
    traj: list[list[float]] = [[float(t0)] for _ in range(record)]

    for k in range(weights.size):
        if alive.size == 0:
            break
        current = state[alive]
        if at_query is not None and k == query_step:
            at_query[alive] = current
        if g is not None:
            functional[alive] += weights[k] * g(current)
        new = current - stepper.increments(current, rng)
        crossed = new <= a
        state[alive] = np.where(crossed, a, new) if mode == STOPPED else new
        exit_step[alive[crossed]] = k
        for i in alive[alive < record]:
            traj[i].append(float(state[i]))
        alive = alive[~crossed]

    if at_query is not None and query_step is not None and query_step >= weights.size:
        at_query[alive] = state[alive]
    exited = exit_step != -1
    exit_time = np.where(exit_step >= 0, (exit_step + 1) * ds, 0.0)
    exit_time[~exited] = weights.size * ds
    if mode == KILLED:
        state = np.where(exited, np.nan, state)
        state[exit_step == -2] = a
    trajectories = [np.asarray(p) for p in traj]
    return exit_time, exited, functional, state, at_query, trajectories


def simulate_paths(
    kernel: JumpKernel,
    t0: float,
    a: float,
    cfg: MonteCarloSettings,
    *,
    mode: str = STOPPED,
    lam: float = 0.0,
    g: Callable | None = None,
    horizon: float | None = None,
    query_time: float | None = None,
    record: int = 0,
    namespace: int = NS_PATH,
) -> PathBatch:
    """Simulate ``cfg.n_paths`` paths from t0 in blocks, possibly on several threads.

    Args:
        kernel: Jump kernel of the process.
        t0: Starting state, t0 >= a.
        a: Barrier.
        cfg: Path budget, step, seed, block size and worker count.
        mode: 'stopped' or 'killed'.
        lam: Discount rate λ >= 0 of the functional.
        g: Vectorized source term; None means g ≡ 0.
        horizon: Simulation horizon; defaults to ``resolve_horizon``.
        query_time: Clock value at which T(s) is recorded per path.
        record: Number of leading paths whose trajectories are kept.

    Returns:
        PathBatch with per-path arrays in path-index order.
    """
    if mode not in (STOPPED, KILLED):
        raise DomainError(f"mode must be '{STOPPED}' or '{KILLED}', got '{mode}'")
    if lam < 0.0:
        raise DomainError(f"discount rate must be nonnegative, got {lam}")
    if t0 < a:
        raise DomainError(f"start {t0} lies below the barrier {a}")
    horizon = resolve_horizon(kernel, t0, a, lam, cfg) if horizon is None else horizon
    weights = discount_weights(lam, cfg.ds, _n_steps(horizon, cfg.ds))
    stepper = Stepper(kernel, cfg.ds, _epsilon(kernel, t0, a, cfg))
    g_vec = vectorized(g) if g is not None else None
    query_step = None if query_time is None else int(math.floor(query_time / cfg.ds))

    n_blocks = math.ceil(cfg.n_paths / cfg.block_size)

    def run(j: int):
        n = min(cfg.block_size, cfg.n_paths - j * cfg.block_size)
        rng = stream(cfg.master_seed, j, namespace)
        keep = max(0, min(record - j * cfg.block_size, n))
        return _run_block(stepper, t0, a, n, rng, weights, g_vec, mode, query_step, keep)

    if cfg.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    else:
        blocks = [run(j) for j in range(n_blocks)]

    trajectories = {}
    for j, block in enumerate(blocks):
        for i, states in enumerate(block[5]):
            trajectories[j * cfg.block_size + i] = (np.arange(states.size) * cfg.ds, states)
    return PathBatch(
        exit_time=np.concatenate([b[0] for b in blocks]),
        exited=np.concatenate([b[1] for b in blocks]),
        functional=np.concatenate([b[2] for b in blocks]),
        final_state=np.concatenate([b[3] for b in blocks]),
        state_at_query=None if query_step is None else np.concatenate([b[4] for b in blocks]),
        trajectories=trajectories,
    )


def simulate_path(
    k: JumpKernel,
    t0: float,
    a: float,
    mode: str,
    ds: float,
    lam: float,
    g: Callable | None,
    horizon: float,
    rng_stream: np.random.Generator,
    eps: float | None = None,
) -> PathSample:
    """Simulate a single path with its own random stream."""
    if mode not in (STOPPED, KILLED):
        raise DomainError(f"mode must be '{STOPPED}' or '{KILLED}', got '{mode}'")
    if lam < 0.0 or not horizon > 0.0:
        raise DomainError("simulate_path needs lam >= 0 and horizon > 0")
    if eps is None:
        eps = MonteCarloSettings.epsilon_fraction * max(k.t_range[1] - a, t0 - a)
    stepper = Stepper(k, ds, eps)
    weights = discount_weights(lam, ds, _n_steps(horizon, ds))
    g_vec = vectorized(g) if g is not None else None
    exit_time, exited, functional, _, _, traj = _run_block(
        stepper, t0, a, 1, rng_stream, weights, g_vec, mode, None, 1
    )
    states = traj[0]
    if mode == KILLED and exited[0] and states.size > 1:
        states = states[:-1]
    return PathSample(
        times=np.arange(states.size) * ds,
        states=states,
        exit_time=float(exit_time[0]),
        exited=bool(exited[0]),
        functional=float(functional[0]),
    )


# ─── Mixed two-coordinate simulation ─────────────────────────────────────────


@dataclass
class MixedBatch:
    """Outcomes of the two-coordinate simulation with a common clock.

    Attributes:
        functional: ∫_0^τ e^(-λs) g(T1(s), T2(s)) ds, τ = min(τ1, τ2).
        boundary_term: e^(-λτ2)·φ(T1(τ2)) on {τ2 < τ1}, else 0.
        exit_time: τ̂ per path.
        exited: Whether either coordinate crossed before the horizon.
        via_stopped: Whether the exit was through the stopped coordinate.
        ties: Whether both coordinates crossed in the same step.
    """

    functional: np.ndarray
    boundary_term: np.ndarray
    exit_time: np.ndarray
    exited: np.ndarray
    via_stopped: np.ndarray
    ties: np.ndarray

    @property
    def n_paths(self) -> int:
        return int(self.functional.size)

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(~self.exited)) if self.n_paths else 0.0

    @property
    def tie_fraction(self) -> float:
        return float(np.mean(self.ties)) if self.n_paths else 0.0


def _run_mixed_block(
    step1: Stepper,
    step2: Stepper,
    t1: float,
    t2: float,
    n: int,
    rng1: np.random.Generator,
    rng2: np.random.Generator,
    weights: np.ndarray,
    g: Callable[[np.ndarray, np.ndarray], np.ndarray] | None,
    phi: Callable[[np.ndarray], np.ndarray] | None,
    lam: float,
) -> tuple[np.ndarray, ...]:
    ds = step1.ds
    x1 = np.full(n, float(t1))
    x2 = np.full(n, float(t2))
    functional = np.zeros(n)
    boundary = np.zeros(n)
    exit_step = np.full(n, -1, dtype=np.int64)
    via_stopped = np.zeros(n, dtype=bool)
    ties = np.zeros(n, dtype=bool)
    alive = np.arange(n)

    for k in range(weights.size):
        if alive.size == 0:
            break
        c1, c2 = x1[alive], x2[alive]
        if g is not None:
            functional[alive] += weights[k] * g(c1, c2)
        new1 = c1 - step1.increments(c1, rng1)
        new2 = c2 - step2.increments(c2, rng2)
        out1 = new1 <= 0.0
        out2 = new2 <= 0.0
        done = out1 | out2
        # Same-step exits go to the killed coordinate.
        stopped_exit = out2 & ~out1
        ties[alive[out1 & out2]] = True
        if phi is not None and np.any(stopped_exit):
            idx = alive[stopped_exit]
            boundary[idx] = math.exp(-lam * (k + 1) * ds) * phi(new1[stopped_exit])
        via_stopped[alive[stopped_exit]] = True
        exit_step[alive[done]] = k
        x1[alive] = new1
        x2[alive] = new2
        alive = alive[~done]

    exited = exit_step >= 0
    exit_time = np.where(exited, (exit_step + 1) * ds, weights.size * ds)
    return functional, boundary, exit_time, exited, via_stopped, ties


def simulate_mixed_paths(
    k1: JumpKernel,
    k2: JumpKernel,
    t1: float,
    t2: float,
    cfg: MonteCarloSettings,
    *,
    lam: float = 0.0,
    g: Callable | None = None,
    phi: Callable | None = None,
    horizon: float | None = None,
) -> MixedBatch:
    """Simulate independent coordinates (T1 killed at 0, T2 stopped at 0) on one clock.

    Each coordinate draws from its own stream namespace, so T1's trajectory
    is the same whether or not T2 is simulated alongside it.
    """
    if lam < 0.0:
        raise DomainError(f"discount rate must be nonnegative, got {lam}")
    if t1 <= 0.0 or t2 <= 0.0:
        raise DomainError("mixed simulation starts strictly inside the quadrant")
    if horizon is None:
        horizon = min(
            resolve_horizon(k1, t1, 0.0, lam, cfg), resolve_horizon(k2, t2, 0.0, lam, cfg)
        )
    weights = discount_weights(lam, cfg.ds, _n_steps(horizon, cfg.ds))
    step1 = Stepper(k1, cfg.ds, _epsilon(k1, t1, 0.0, cfg))
    step2 = Stepper(k2, cfg.ds, _epsilon(k2, t2, 0.0, cfg))
    g_vec = vectorized2(g) if g is not None else None
    phi_vec = vectorized(phi) if phi is not None else None
    n_blocks = math.ceil(cfg.n_paths / cfg.block_size)

    def run(j: int):
        n = min(cfg.block_size, cfg.n_paths - j * cfg.block_size)
        rng1 = stream(cfg.master_seed, j, NS_COORD1)
        rng2 = stream(cfg.master_seed, j, NS_COORD2)
        return _run_mixed_block(step1, step2, t1, t2, n, rng1, rng2, weights, g_vec, phi_vec, lam)

    if cfg.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    else:
        blocks = [run(j) for j in range(n_blocks)]
    return MixedBatch(*(np.concatenate([b[i] for b in blocks]) for i in range(6)))
