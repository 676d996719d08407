"""Cross-engine validation battery.

Every check compares two independent routes to the same number (Monte Carlo
against quadrature, quadrature against the Mittag-Leffler closed form, a
special-function identity against its integral form) and records the achieved
discrepancy next to the required tolerance. A check that raises is recorded as
failed with the error text; the battery always runs to the end.

``quick=True`` shrinks grids and path counts so the battery fits in a test run.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from fracflow.config import HypothesisThresholds, MonteCarloSettings
from fracflow.engines.solve_mc import (
    CAPUTO,
    MIXED,
    RL,
    ProblemSpec,
    laplace_exit_mc,
    solve_caputo_mc,
    solve_mixed_mc,
    solve_rl_mc,
)
from fracflow.engines.solve_quad import (
    caputo_solution,
    laplace_exit_quad,
    shift_source,
    solve_caputo_closed_form,
    solve_caputo_quad,
    solve_mixed_quad,
    solve_rl_quad,
)
from fracflow.errors import FracflowError
from fracflow.kernels import (
    apply_caputo_operator,
    kernel_distributed,
    kernel_multi_term,
    kernel_stable,
    kernel_variable_order,
    validate_hypotheses,
)
from fracflow.output import write_csv
from fracflow.paths import (
    KILLED,
    NS_EXIT,
    exit_time_density_stable,
    exit_time_survival_stable,
    exit_times_stable_exact,
    simulate_paths,
    stream,
)
from fracflow.quadrature import integrate
from fracflow.special_fn import (
    check_ml_stable_identity,
    mittag_leffler,
    stable_density,
    stable_law,
)

QUICK_PATHS = 20_000
EXIT_DRAWS = 100_000
BIAS_PATHS = 1_000_000
BIAS_STEPS = (0.01, 0.005, 0.0025)
KS_STEP = 1e-3


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check: achieved discrepancy against the required bound."""

    name: str
    achieved: float
    required: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "achieved": self.achieved,
            "required": self.required,
            "passed": self.passed,
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_records(self) -> list[dict]:
        return [c.to_dict() for c in self.checks]

    def write_csv(self, path: Path | str) -> Path:
        columns = ["check", "achieved", "required", "passed", "detail"]
        rows = [
            [c.name, float(c.achieved), float(c.required), c.passed, c.detail]
            for c in self.checks
        ]
        return write_csv(path, columns, rows)


def _bounded(name: str, achieved: float, required: float, detail: str = "") -> CheckResult:
    return CheckResult(name, float(achieved), float(required), bool(achieved <= required), detail)


def _max_z(estimates, references) -> tuple[float, float]:
    """Largest |Δ|/SE and largest |Δ| over paired estimates and reference values."""
    z, delta = 0.0, 0.0
    for est, ref in zip(estimates, references):
        diff = abs(est.value - ref)
        delta = max(delta, diff)
        if est.std_error > 0.0:
            z = max(z, diff / est.std_error)
        elif diff > 1e-12:
            z = math.inf
    return z, delta


def _relative(values, references) -> float:
    worst = 0.0
    for v, r in zip(values, references):
        diff = abs(v - r)
        if diff > 0.0:
            worst = max(worst, diff / max(abs(r), 1e-12))
    return worst


SOURCES: dict[str, Callable | None] = {"0": None, "1": lambda t: 1.0, "sin": math.sin}


# ─── Checks ──────────────────────────────────────────────────────────────────


def check_laplace_exit(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Quadrature and exact-sampler Laplace transforms of τ against E_β(-λ)."""
    betas = (0.5,) if quick else (0.3, 0.5, 0.7)
    lams = (1.0,) if quick else (0.5, 1.0, 2.0)
    draws = QUICK_PATHS if quick else EXIT_DRAWS
    mc_cfg = replace(cfg, n_paths=draws)
    quad_err, z, delta = 0.0, 0.0, 0.0
    for beta in betas:
        for lam in lams:
            reference = mittag_leffler(beta, -lam)
            quad_err = max(quad_err, abs(laplace_exit_quad(beta, lam, 1.0, 0.0) - reference))
            est = laplace_exit_mc(kernel_stable(beta), lam, 1.0, 0.0, mc_cfg)
            zi, di = _max_z([est], [reference])
            z, delta = max(z, zi), max(delta, di)
    yield _bounded("laplace_exit_quad", quad_err, 1e-6)
    yield _bounded("laplace_exit_mc_se", z, 3.0, f"{draws} exact draws per point")
    yield _bounded("laplace_exit_mc_abs", delta, 5e-3)


def check_identity(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    worst = max(
        abs(check_ml_stable_identity(beta, u)) for beta in (0.4, 0.6) for u in (0.1, 1.0, 10.0)
    )
    yield _bounded("ml_stable_identity", worst, 1e-6)


def _caputo_battery(quick: bool):
    betas = (0.5,) if quick else (0.3, 0.5, 0.7)
    sources = ("1", "sin") if quick else ("0", "1", "sin")
    for beta in betas:
        for lam in (0.0, 1.0):
            for u_a in (0.0, 1.0):
                for name in sources:
                    yield beta, lam, u_a, name


def _grid(quick: bool) -> list[float]:
    count = 4 if quick else 10
    return [float(t) for t in np.linspace(1.0 / count, 1.0, count)]


def check_closed_form(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Density quadrature against the Mittag-Leffler closed form, and the RL/Caputo bridge."""
    grid = _grid(quick)
    rel, bridge = 0.0, 0.0
    for beta, lam, u_a, name in _caputo_battery(quick):
        g = SOURCES[name]
        quad = solve_caputo_quad(beta, lam, g, u_a, 0.0, grid)
        closed = solve_caputo_closed_form(beta, lam, g, u_a, 0.0, grid)
        rel = max(rel, _relative(quad.values, closed.values))
        shifted = shift_source(g, lam * u_a)
        rl = solve_rl_quad(beta, lam, shifted, 0.0, grid)
        bridge = max(
            bridge, max(abs(q - u_a - w) for q, w in zip(quad.values, rl.values))
        )
    yield _bounded("caputo_quad_vs_closed_form", rel, 1e-3)
    yield _bounded("rl_caputo_bridge", bridge, 1e-8)


def check_operator_residual(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """D*u + λu - g at interior points for the β = 0.5, λ = 1, g = sin solution."""
    beta, lam, u_a = 0.5, 1.0, 1.0
    u = caputo_solution(beta, lam, math.sin, u_a, 0.0)
    kernel = kernel_stable(beta)
    points = (0.5, 1.0) if quick else tuple(np.linspace(0.1, 1.0, 10))
    worst = 0.0
    for t in points:
        t = float(t)
        d_star = -apply_caputo_operator(kernel, u, 0.0, t)
        residual = d_star + lam * u(t) - math.sin(t)
        worst = max(worst, abs(residual) / (1.0 + abs(math.sin(t))))
    yield _bounded("caputo_operator_residual", worst, 1e-2)


def check_stable_density(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    rel = 0.0
    for x in (0.1, 0.5, 1.0, 2.0, 10.0):
        exact = x**-1.5 * math.exp(-1.0 / (4.0 * x)) / (2.0 * math.sqrt(math.pi))
        rel = max(rel, abs(stable_density(0.5, x) - exact) / exact)
    yield _bounded("stable_density_half", rel, 1e-8)
    pin = 0.0
    for beta in (0.3, 0.5, 0.7, 0.9):
        law = stable_law(beta)
        for lam in (0.5, 1.0, 2.0):
            value = law.expect(lambda x, lam=lam: np.exp(-lam * x))
            pin = max(pin, abs(value - math.exp(-(lam**beta))))
    yield _bounded("stable_laplace_pin", pin, 1e-6)


def check_mc_convergence(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Caputo Monte Carlo at β = 0.5 against the closed form; then again with ds halved."""
    beta = 0.5
    grid = [0.5, 1.0] if quick else _grid(False)
    mc_cfg = replace(cfg, n_paths=QUICK_PATHS) if quick else cfg
    kernel = kernel_stable(beta)
    battery = [(1.0, 1.0, "0")] if quick else [
        (lam, u_a, name) for lam in (0.0, 1.0) for u_a in (0.0, 1.0) for name in ("0", "1", "sin")
    ]
    z, z_half = 0.0, 0.0
    for lam, u_a, name in battery:
        g = SOURCES[name]
        closed = solve_caputo_closed_form(beta, lam, g, u_a, 0.0, grid).values
        spec = ProblemSpec(kind=CAPUTO, kernel=kernel, lam=lam, g=g, u_a=u_a)
        z = max(z, _max_z(solve_caputo_mc(spec, grid, mc_cfg).estimates(), closed)[0])
        if not quick:
            half = replace(mc_cfg, ds=mc_cfg.ds / 2.0)
            z_half = max(z_half, _max_z(solve_caputo_mc(spec, grid, half).estimates(), closed)[0])
    yield _bounded("caputo_mc_vs_closed_form", z, 3.0, f"ds={mc_cfg.ds}, {mc_cfg.n_paths} paths")
    if not quick:
        yield _bounded("caputo_mc_half_step", z_half, max(z, 3.0), f"ds={mc_cfg.ds / 2.0}")


def check_kernel_reductions(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Degenerate multi-term, variable-order and distributed kernels reduce to the stable one."""
    beta, lam, u_a = 0.5, 1.0, 1.0
    grid = [1.0] if quick else [0.5, 1.0]
    mc_cfg = replace(cfg, n_paths=QUICK_PATHS) if quick else cfg
    closed = solve_caputo_closed_form(beta, lam, None, u_a, 0.0, grid).values
    kernels = {
        "multi_term": kernel_multi_term([1.0], [beta]),
        "variable_order": kernel_variable_order(lambda t: beta, beta_range=(beta, beta)),
        "distributed": kernel_distributed(lambda s, t: 1.0, lambda s, t: beta, [(0.0, 1.0)]),
    }
    for name, kernel in kernels.items():
        spec = ProblemSpec(kind=CAPUTO, kernel=kernel, lam=lam, u_a=u_a)
        z, _ = _max_z(solve_caputo_mc(spec, grid, mc_cfg).estimates(), closed)
        yield _bounded(f"reduction_{name}", z, 3.0)


def _phi(t: float) -> float:
    return t * (1.0 - t) if 0.0 <= t <= 1.0 else 0.0


def check_mixed(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Mixed problem: Monte Carlo against density quadrature, boundary rows exact."""
    grid = [(1.0, 1.0)] if quick else [(0.5, 0.5), (1.0, 1.0), (1.0, 0.5)]
    boundary = [(0.0, 0.7), (0.4, 0.0)]
    mc_cfg = replace(cfg, n_paths=QUICK_PATHS) if quick else cfg

    def g(t1, t2):
        return 1.0

    quad = solve_mixed_quad(0.5, 0.5, 1.0, g, _phi, grid + boundary, phi_breaks=(1.0,))
    spec = ProblemSpec(
        kind=MIXED, kernel=kernel_stable(0.5), kernel2=kernel_stable(0.5), lam=1.0,
        g=g, phi=_phi, b=2.0, b2=2.0,
    )
    mc = solve_mixed_mc(spec, grid + boundary, mc_cfg)
    z, _ = _max_z(mc.estimates()[: len(grid)], quad.values[: len(grid)])
    yield _bounded("mixed_mc_vs_quad", z, 3.0)
    exact = [0.0, _phi(0.4)]
    worst = max(
        abs(v - e) for v, e in zip(quad.values[len(grid):] + mc.values[len(grid):], exact * 2)
    )
    yield _bounded("mixed_boundary_rows", worst, 0.0)


def check_exit_law(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Normalization of the exit-time density and KS distance of exact τ draws."""
    norm, ks = 0.0, 0.0
    draws = QUICK_PATHS if quick else EXIT_DRAWS
    for beta in (0.3, 0.7):
        mass = integrate(
            lambda s, beta=beta: exit_time_density_stable(beta, 1.0, 0.0, s),
            0.0, math.inf, points=[1.0], epsabs=1e-10, epsrel=1e-9,
            label=f"exit-time density mass (beta={beta})",
        )
        norm = max(norm, abs(mass - 1.0))
        taus = exit_times_stable_exact(beta, 1.0, 0.0, draws, stream(cfg.master_seed, 0, NS_EXIT))
        law = stable_law(beta)
        # P[τ <= s] = P[W > s^(-1/β)] for unit distance to the barrier.
        result = stats.kstest(taus, lambda s, law=law, beta=beta: law.sf(s ** (-1.0 / beta)))
        ks = max(ks, float(result.statistic))
        edge = abs(1.0 - exit_time_survival_stable(beta, 1.0, 0.0, 1.0) - law.sf(1.0))
        norm = max(norm, edge)
    yield _bounded("exit_density_mass", norm, 1e-6)
    yield _bounded("exit_time_ks", ks, 0.01, f"{draws} draws")


def check_exit_detection(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Step-detected exit times: KS distance to exact draws, and bias decay as ds shrinks."""
    beta = 0.5
    kernel = kernel_stable(beta)
    draws = QUICK_PATHS if quick else EXIT_DRAWS
    fine = replace(cfg, n_paths=draws, ds=KS_STEP)
    batch = simulate_paths(kernel, 1.0, 0.0, fine, mode=KILLED, lam=1.0)
    exact = exit_times_stable_exact(beta, 1.0, 0.0, draws, stream(cfg.master_seed, 0, NS_EXIT))
    ks = float(stats.ks_2samp(batch.exit_time[batch.exited], exact).statistic)
    # 99% two-sample critical value when the draw count is too small for 0.01
    bound = max(0.01, 1.63 * math.sqrt(2.0 / draws)) if quick else 0.01
    yield _bounded("exit_step_ks", ks, bound, f"{draws} draws, ds={KS_STEP}")
    if quick:
        return

    reference = mittag_leffler(beta, -1.0)
    errors, ses = [], []
    for ds in BIAS_STEPS:
        run = replace(cfg, n_paths=BIAS_PATHS, ds=ds)
        samples = simulate_paths(kernel, 1.0, 0.0, run, mode=KILLED, lam=1.0).discount(1.0)
        errors.append(abs(float(samples.mean()) - reference))
        ses.append(float(samples.std(ddof=1)) / math.sqrt(samples.size))
    growth = max(
        (errors[i + 1] - errors[i]) / math.hypot(ses[i], ses[i + 1])
        for i in range(len(errors) - 1)
    )
    detail = ", ".join(f"ds={ds}: {e:.2e}" for ds, e in zip(BIAS_STEPS, errors))
    yield _bounded("exit_step_bias_growth_se", growth, 3.0, detail)
    yield _bounded("exit_step_bias_ratio", errors[-1] / max(errors[0], 1e-300), 1.0, detail)


def check_discontinuous_source(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """Step source at t = 0.5: RL quadrature against RL Monte Carlo, no jump in the solution."""
    beta, lam = 0.5, 1.0
    grid = [0.25, 0.55, 1.0] if quick else _grid(False)
    mc_cfg = replace(cfg, n_paths=QUICK_PATHS) if quick else cfg

    def step(t):
        return np.where(np.asarray(t) < 0.5, 0.0, 1.0)

    quad = solve_rl_quad(beta, lam, step, 0.0, grid, breaks=(0.5,))
    spec = ProblemSpec(kind=RL, kernel=kernel_stable(beta), lam=lam, g=step, g_breaks=(0.5,))
    z, _ = _max_z(solve_rl_mc(spec, grid, mc_cfg).estimates(), quad.values)
    yield _bounded("step_source_mc_vs_quad", z, 3.0)

    # A solution continuous at 0.5 changes by O(h^β) across it; a jump of the source would not.
    h = 1e-4
    around = solve_rl_quad(beta, lam, step, 0.0, [0.5 - h, 0.5 + h], breaks=(0.5,)).values
    bound = 4.0 * h**beta / math.gamma(1.0 + beta)
    yield _bounded("step_source_continuity", abs(around[1] - around[0]), bound)


def check_hypotheses(
    quick: bool, cfg: MonteCarloSettings, thresholds: HypothesisThresholds | None = None
) -> Iterator[CheckResult]:
    """The (H0)/(H1) probes accept a stable and a variable-order kernel."""
    kernels = [
        kernel_stable(0.5),
        kernel_variable_order(lambda t: 0.4 + 0.2 * t, lambda t: 0.2, beta_range=(0.35, 0.65)),
    ]
    for kernel in kernels:
        report = validate_hypotheses(kernel, (0.0, 1.0), thresholds=thresholds)
        failed = [name for name, ok in report.passed.items() if not ok]
        yield CheckResult(
            f"hypotheses_{kernel.label}",
            float(len(failed)),
            0.0,
            report.ok,
            "; ".join(failed + report.notes),
        )


Check = Callable[[bool, MonteCarloSettings, HypothesisThresholds], Iterator[CheckResult]]

BATTERY: tuple[Check, ...] = (
    check_identity,
    check_stable_density,
    check_laplace_exit,
    check_exit_law,
    check_closed_form,
    check_operator_residual,
    check_discontinuous_source,
    check_hypotheses,
    check_exit_detection,
    check_mc_convergence,
    check_kernel_reductions,
    check_mixed,
)


def run_battery(
    cfg: MonteCarloSettings | None = None,
    quick: bool = False,
    only: tuple[str, ...] = (),
    thresholds: HypothesisThresholds | None = None,
) -> ValidationReport:
    """Run the checks in order and collect their results.

    Args:
        cfg: Monte Carlo settings; seeds and step come from here.
        quick: Use the reduced grids and path counts.
        only: Restrict to checks whose function name contains one of these.
        thresholds: Kernel hypothesis thresholds, usually from the settings file.

    Returns:
        ValidationReport in battery order. Errors become failed checks.
    """
    cfg = cfg or MonteCarloSettings()
    thresholds = thresholds or HypothesisThresholds()
    report = ValidationReport()
    for check in BATTERY:
        name = check.__name__.removeprefix("check_")
        if only and not any(o in name for o in only):
            continue
        try:
            report.checks.extend(check(quick, cfg, thresholds))
        except FracflowError as exc:
            report.checks.append(CheckResult(name, math.inf, 0.0, False, str(exc)))
    return report
