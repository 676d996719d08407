"""fracflow — solvers for linear fractional differential equations.

Main CLI entry point using Click with one subcommand per task.
"""

from __future__ import annotations

import sys
import time
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click

from fracflow import __version__
from fracflow.config import WORKERS_ENV, Settings
from fracflow.errors import ConfigError, FracflowError, ValidationFailure
from fracflow.output import (
    error,
    forward_warnings,
    info,
    render,
    render_detail,
    success,
    write_csv,
)
from fracflow.problem import RunConfig, as_callable, load_run_config
from fracflow.results import SolutionCurve

DEFAULT_DUMP_PATHS = 10

# ─── Global context ──────────────────────────────────────────────────────────


class AppContext:
    """Shared application context passed through Click."""

    def __init__(self):
        self.settings: Settings | None = None
        self._format: str = "table"

    @property
    def format(self) -> str:
        return self._format

    @format.setter
    def format(self, value: str):
        self._format = value

    @property
    def verbose(self) -> bool:
        return bool(self.settings and self.settings.verbose)


pass_context = click.make_pass_decorator(AppContext, ensure=True)


@contextmanager
def _guard(ctx: AppContext, task: str) -> Iterator[None]:
    """Forward library warnings and turn errors into exit codes."""
    start = time.perf_counter()
    try:
        with forward_warnings():
            yield
    except FracflowError as exc:
        error(str(exc))
        sys.exit(exc.exit_code)
    except OverflowError as exc:
        error(f"overflow: {exc}")
        sys.exit(2)
    if ctx.verbose:
        info(f"{task} finished in {time.perf_counter() - start:.2f}s", stderr=True)


def _load(ctx: AppContext, config: str) -> RunConfig:
    return load_run_config(Path(config), ctx.settings.monte_carlo)


def _destination(ctx: AppContext, out: str | None, cfg: RunConfig) -> Path | None:
    """--out as given; the config's ``output`` key relative to the settings output_dir."""
    if out:
        return Path(out)
    if cfg.output:
        return ctx.settings.resolve_output(cfg.output)
    return None


def _emit(ctx: AppContext, columns: list[str], rows: list[list], target: Path | None, title: str):
    if target is not None:
        write_csv(target, columns, rows)
        success(f"Wrote {len(rows)} rows to {target}")
    else:
        render([dict(zip(columns, row)) for row in rows], format=ctx.format, title=title,
               columns=columns)


# ─── Root CLI group ──────────────────────────────────────────────────────────


@click.group()
@click.option(
    "--format", "-f",
    type=click.Choice(["table", "json", "plain"], case_sensitive=False),
    default=None,
    help="Output format (overrides settings).",
)
@click.option(
    "--settings", "-s", "settings_path",
    type=click.Path(exists=False),
    default=None,
    help="Path to settings file.",
)
@click.option(
    "--workers", "-w",
    type=click.IntRange(min=1),
    envvar=WORKERS_ENV,
    default=None,
    help=f"Worker threads for Monte Carlo blocks (env {WORKERS_ENV}).",
)
@click.option("--verbose", "-v", is_flag=True, help="Print timings and per-check details.")
@click.version_option(version=__version__, prog_name="fracflow")
@pass_context
def cli(
    ctx: AppContext,
    format: str | None,
    settings_path: str | None,
    workers: int | None,
    verbose: bool,
):
    """fracflow — Caputo, Riemann-Liouville and mixed fractional equations.

    Solves linear equations by Monte Carlo over the underlying jump processes,
    by density quadrature, or by the Mittag-Leffler closed form.
    """
    path = Path(settings_path) if settings_path else None
    try:
        ctx.settings = Settings.load(path)
    except ConfigError as exc:
        error(str(exc))
        sys.exit(exc.exit_code)
    except (ValueError, TypeError) as exc:
        error(f"invalid settings file: {exc}")
        sys.exit(1)

    if verbose:
        ctx.settings.verbose = True
    if workers is not None:
        ctx.settings.monte_carlo.workers = workers

    ctx.format = format or ctx.settings.default_format


# ─── Solvers ─────────────────────────────────────────────────────────────────


def _dump_paths(ctx: AppContext, cfg: RunConfig, n: int, target: Path, mode: str) -> None:
    from fracflow.paths import simulate_paths

    problem = cfg.problem
    spec = problem.spec(ctx.settings.hypotheses)
    t0 = cfg.grid[-1]
    batch = simulate_paths(
        spec.kernel, t0, spec.a, cfg.mc, mode=mode, lam=spec.lam, g=spec.g, record=n
    )
    rows = []
    for path_id in sorted(batch.trajectories):
        times, states = batch.trajectories[path_id]
        rows.extend([path_id, float(s), float(x)] for s, x in zip(times, states))
    write_csv(target, ["path_id", "s", "state"], rows)
    success(f"Wrote {len(batch.trajectories)} paths from t={t0} to {target}")


def _solve_one_dimensional(ctx: AppContext, cfg: RunConfig) -> SolutionCurve:
    from fracflow.engines import solve_mc, solve_quad

    problem = cfg.problem
    g = as_callable(problem.g)
    a = problem.interval[0]
    if cfg.method == "mc":
        spec = problem.spec(ctx.settings.hypotheses)
        if problem.kind == solve_mc.CAPUTO:
            return solve_mc.solve_caputo_mc(spec, cfg.grid, cfg.mc)
        return solve_mc.solve_rl_mc(spec, cfg.grid, cfg.mc)
    beta = problem.kernel.stable_beta
    if problem.kind == solve_mc.RL:
        if cfg.method == "closed_form":
            return solve_quad.solve_caputo_closed_form(
                beta, problem.lam, g, 0.0, a, cfg.grid, problem.g_breaks
            )
        return solve_quad.solve_rl_quad(beta, problem.lam, g, a, cfg.grid, problem.g_breaks)
    if cfg.method == "closed_form":
        return solve_quad.solve_caputo_closed_form(
            beta, problem.lam, g, problem.u_a, a, cfg.grid, problem.g_breaks
        )
    return solve_quad.solve_caputo_quad(
        beta, problem.lam, g, problem.u_a, a, cfg.grid, problem.g_breaks
    )


def _solve_mixed(ctx: AppContext, cfg: RunConfig) -> SolutionCurve:
    from fracflow.engines import solve_mc, solve_quad

    problem = cfg.problem
    if cfg.method == "mc":
        return solve_mc.solve_mixed_mc(problem.spec(ctx.settings.hypotheses), cfg.grid2d, cfg.mc)
    phi = problem.phi
    return solve_quad.solve_mixed_quad(
        problem.kernel.stable_beta,
        problem.kernel2.stable_beta,
        problem.lam,
        as_callable(problem.g),
        as_callable(phi),
        cfg.grid2d,
        variant=problem.variant,
        phi_breaks=phi.breakpoints if phi is not None else (),
    )


def _run_report(ctx: AppContext, cfg: RunConfig, curve: SolutionCurve) -> dict:
    """Engine settings, hypothesis checks and drift from the closed form where one exists."""
    from fracflow.engines import solve_quad
    from fracflow.kernels import validate_hypotheses

    problem = cfg.problem
    spec = problem.spec(ctx.settings.hypotheses)
    report = {
        "kind": problem.kind,
        "method": cfg.method,
        "kernel": spec.kernel.label,
        "lambda": problem.lam,
        "points": len(curve.values),
    }
    if cfg.method == "mc":
        report.update(
            n_paths=cfg.mc.n_paths,
            ds=cfg.mc.ds,
            master_seed=cfg.mc.master_seed,
            max_std_error=max(curve.std_errors, default=0.0),
            max_truncated_fraction=max(curve.truncated_fractions, default=0.0),
        )
        if curve.tie_fractions:
            report["max_tie_fraction"] = max(curve.tie_fractions)

    hypotheses = validate_hypotheses(
        spec.kernel, (spec.a, spec.b), thresholds=ctx.settings.hypotheses
    )
    report.update({f"hypotheses.{k}": v for k, v in hypotheses.to_dict().items()})
    report["hypotheses.ok"] = hypotheses.ok

    beta = problem.kernel.stable_beta
    if problem.kind != "mixed" and beta is not None and cfg.method != "closed_form":
        u_a = problem.u_a if problem.kind == "caputo" else 0.0
        exact = solve_quad.solve_caputo_closed_form(
            beta, problem.lam, as_callable(problem.g), u_a, spec.a, cfg.grid, problem.g_breaks
        )
        report["max_abs_closed_form_diff"] = max(
            (abs(v - e) for v, e in zip(curve.values, exact.values)), default=0.0
        )
    return report


def _emit_report(ctx: AppContext, report: dict, target: Path | None) -> None:
    """Report next to the solution CSV as ``<stem>.report.csv``, else to the terminal."""
    if target is None:
        render_detail(report, format=ctx.format, title="Run report")
        return
    path = target.with_name(f"{target.stem}.report.csv")
    write_csv(path, ["key", "value"], [[key, value] for key, value in report.items()])
    success(f"Wrote run report to {path}")


def _solve(ctx: AppContext, kind: str, config: str, out: str | None, dump_paths: str | None):
    with _guard(ctx, f"solve-{kind}"):
        cfg = _load(ctx, config)
        if cfg.problem is None:
            raise ConfigError("missing required key", key="problem")
        if cfg.problem.kind != kind:
            raise ConfigError(
                f"this command solves '{kind}' problems, got '{cfg.problem.kind}'",
                key="problem.kind",
            )
        if not (cfg.grid or cfg.grid2d):
            raise ConfigError("missing required key", key="grid")
        if ctx.verbose:
            info(
                f"method={cfg.method}, workers={cfg.mc.workers}, seed={cfg.mc.master_seed}",
                stderr=True,
            )

        curve = _solve_mixed(ctx, cfg) if kind == "mixed" else _solve_one_dimensional(ctx, cfg)
        target = _destination(ctx, out, cfg)
        _emit(ctx, curve.columns(), curve.rows(), target, f"{kind} solution")
        if cfg.report:
            _emit_report(ctx, _run_report(ctx, cfg, curve), target)

        if dump_paths:
            if cfg.method != "mc":
                raise ConfigError("path dumps need method 'mc'", key="method")
            if kind == "mixed":
                raise ConfigError(
                    "path dumps are available for one-dimensional problems", key="dump_paths"
                )
            from fracflow.paths import KILLED, STOPPED

            n = cfg.dump_paths or DEFAULT_DUMP_PATHS
            _dump_paths(ctx, cfg, n, Path(dump_paths), STOPPED if kind == "caputo" else KILLED)


def _solver_options(fn):
    fn = click.option(
        "--dump-paths", "dump_paths", type=click.Path(), default=None,
        help="Write trajectories of the first paths (MC only) to this CSV.",
    )(fn)
    fn = click.option("--out", "-o", type=click.Path(), default=None, help="Output CSV path.")(fn)
    fn = click.option(
        "--config", "-c", type=click.Path(), required=True, help="Run configuration (JSON).",
    )(fn)
    return fn


@cli.command("solve-caputo")
@_solver_options
@pass_context
def solve_caputo(ctx: AppContext, config: str, out: str | None, dump_paths: str | None):
    """Solve a Caputo-type problem with boundary value u(a) = u_a."""
    _solve(ctx, "caputo", config, out, dump_paths)


@cli.command("solve-rl")
@_solver_options
@pass_context
def solve_rl(ctx: AppContext, config: str, out: str | None, dump_paths: str | None):
    """Solve a Riemann-Liouville-type problem with zero boundary data."""
    _solve(ctx, "rl", config, out, dump_paths)


@cli.command("solve-mixed")
@_solver_options
@pass_context
def solve_mixed(ctx: AppContext, config: str, out: str | None, dump_paths: str | None):
    """Solve the two-dimensional mixed problem on a grid of (t1, t2) points."""
    _solve(ctx, "mixed", config, out, dump_paths)


# ─── Exit-time law ───────────────────────────────────────────────────────────


@cli.command("exit-law")
@_solver_options
@pass_context
def exit_law(ctx: AppContext, config: str, out: str | None, dump_paths: str | None):
    """Exit-time law of the process started at b with barrier a.

    Stable kernels with method quad/closed_form give a table of density,
    survival and Laplace transform; otherwise exit times are sampled.
    """
    from fracflow.engines import solve_mc, solve_quad
    from fracflow.paths import exit_time_density_stable, exit_time_survival_stable
    from fracflow.special_fn import mittag_leffler

    with _guard(ctx, "exit-law"):
        cfg = _load(ctx, config)
        if cfg.problem is None:
            raise ConfigError("missing required key", key="problem")
        problem = cfg.problem
        if problem.kind == "mixed":
            raise ConfigError("exit-law takes a one-dimensional problem", key="problem.kind")
        a, t = problem.interval
        lam = cfg.exit_law.get("lambda", problem.lam)
        target = _destination(ctx, out, cfg)
        beta = problem.kernel.stable_beta

        if cfg.method != "mc":
            if "s" not in cfg.exit_law:
                raise ConfigError("missing required key", key="exit_law.s")
            laplace = solve_quad.laplace_exit_quad(beta, lam, t, a)
            rows = [
                [
                    s,
                    exit_time_density_stable(beta, t, a, s),
                    exit_time_survival_stable(beta, t, a, s),
                    laplace,
                ]
                for s in cfg.exit_law["s"]
            ]
            _emit(ctx, ["s", "density", "survival", "laplace_at_lambda"], rows, target,
                  "exit-time law")
            render_detail(
                {
                    "beta": beta,
                    "lambda": lam,
                    "laplace_quad": laplace,
                    "mittag_leffler": mittag_leffler(beta, -lam * (t - a) ** beta),
                },
                format=ctx.format,
                title="Laplace transform of the exit time",
            )
            return

        kernel = problem.spec(ctx.settings.hypotheses).kernel
        taus, exited = solve_mc.exit_time_samples(kernel, t, a, cfg.mc)
        rows = [[i, float(tau), bool(done)] for i, (tau, done) in enumerate(zip(taus, exited))]
        if target is not None:
            write_csv(target, ["path_id", "tau", "exited"], rows)
            success(f"Wrote {len(rows)} exit times to {target}")
        estimate = solve_mc.laplace_exit_mc(kernel, lam, t, a, cfg.mc)
        render_detail(
            {
                "kernel": kernel.label,
                "lambda": lam,
                "laplace_mc": estimate.value,
                "std_error": estimate.std_error,
                "n_paths": estimate.n_paths,
                "truncated_fraction": estimate.truncated_fraction,
            },
            format=ctx.format,
            title="Laplace transform of the exit time",
        )

        if dump_paths:
            from fracflow.paths import KILLED

            cfg.grid = [t]
            _dump_paths(ctx, cfg, cfg.dump_paths or DEFAULT_DUMP_PATHS, Path(dump_paths), KILLED)


# ─── Special functions ───────────────────────────────────────────────────────


@cli.command("ml")
@click.option("--config", "-c", type=click.Path(), required=True, help="Run configuration (JSON).")
@click.option("--out", "-o", type=click.Path(), default=None, help="Output CSV path.")
@pass_context
def ml(ctx: AppContext, config: str, out: str | None):
    """Tabulate E_β(z), or E_{β,β2}(z) when beta2 is given."""
    from fracflow.special_fn import mittag_leffler, mittag_leffler2

    with _guard(ctx, "ml"):
        cfg = _load(ctx, config)
        section = cfg.ml
        for key in ("beta", "z"):
            if key not in section:
                raise ConfigError("missing required key", key=f"ml.{key}")
        beta = section["beta"]
        switch, terms = ctx.settings.ml_switch, ctx.settings.ml_terms
        if "beta2" in section:
            values = [
                mittag_leffler2(beta, section["beta2"], z, switch=switch, terms=terms)
                for z in section["z"]
            ]
        else:
            values = [mittag_leffler(beta, z, switch=switch, terms=terms) for z in section["z"]]
        rows = [[z, v] for z, v in zip(section["z"], values)]
        _emit(ctx, ["z", "value"], rows, _destination(ctx, out, cfg),
              f"Mittag-Leffler (beta={beta})")


@cli.command("density")
@click.option("--config", "-c", type=click.Path(), required=True, help="Run configuration (JSON).")
@click.option("--out", "-o", type=click.Path(), default=None, help="Output CSV path.")
@pass_context
def density(ctx: AppContext, config: str, out: str | None):
    """Tabulate the one-sided stable density and distribution function."""
    from fracflow.special_fn import stable_cdf, stable_density

    with _guard(ctx, "density"):
        cfg = _load(ctx, config)
        section = cfg.density
        for key in ("beta", "x"):
            if key not in section:
                raise ConfigError("missing required key", key=f"density.{key}")
        beta = section["beta"]
        rows = [[x, stable_density(beta, x), stable_cdf(beta, x)] for x in section["x"]]
        _emit(ctx, ["x", "pdf", "cdf"], rows, _destination(ctx, out, cfg),
              f"stable density (beta={beta})")


# ─── Validation ──────────────────────────────────────────────────────────────


@cli.command("validate")
@click.option("--config", "-c", type=click.Path(), default=None, help="Run configuration (JSON).")
@click.option("--out", "-o", type=click.Path(), default=None, help="Report CSV path.")
@click.option("--quick", is_flag=True, help="Reduced grids and path counts.")
@click.option("--only", multiple=True, help="Run only checks whose name contains this text.")
@pass_context
def validate(ctx: AppContext, config: str | None, out: str | None, quick: bool, only: tuple):
    """Run the cross-engine validation battery; exit 3 if any check fails."""
    from dataclasses import replace

    from fracflow.validation import run_battery

    with _guard(ctx, "validate"):
        mc = ctx.settings.monte_carlo
        target = Path(out) if out else None
        if config:
            cfg = _load(ctx, config)
            mc = cfg.mc
            quick = quick or bool(cfg.validate.get("quick", False))
            if "n_paths" in cfg.validate:
                mc = replace(mc, n_paths=cfg.validate["n_paths"])
            target = target or _destination(ctx, None, cfg)

        report = run_battery(mc, quick=quick, only=tuple(only), thresholds=ctx.settings.hypotheses)
        columns = ["check", "achieved", "required", "passed"]
        if ctx.verbose:
            columns.append("detail")
        render(report.to_records(), format=ctx.format, title="Validation", columns=columns)
        if target is not None:
            report.write_csv(target)
            success(f"Report written to {target}")
        if not report.ok:
            names = ", ".join(c.name for c in report.failures)
            raise ValidationFailure(f"{len(report.failures)} check(s) failed: {names}")
        success(f"All {len(report.checks)} checks passed.")


# ─── Settings commands ───────────────────────────────────────────────────────


@cli.group()
def settings():
    """Show or initialize the settings file."""
    pass


@settings.command("show")
@pass_context
def settings_show(ctx: AppContext):
    """Show the effective settings."""
    flat = {
        f"{section}.{key}": value
        for section, values in ctx.settings.to_dict().items()
        for key, value in values.items()
    }
    flat["file"] = str(ctx.settings.config_file)
    render_detail(flat, format=ctx.format, title="Settings")


@settings.command("init")
@click.option("--force", is_flag=True, help="Overwrite an existing settings file.")
@pass_context
def settings_init(ctx: AppContext, force: bool):
    """Write the current settings to the settings file."""
    path = ctx.settings.config_file
    if path.exists() and not force:
        error(f"{path} already exists; use --force to overwrite.")
        sys.exit(1)
    ctx.settings.save()
    ctx.settings.ensure_dirs()
    success(f"Settings written to {path}")


# ─── Entry point ─────────────────────────────────────────────────────────────


def main():
    """Entry point wrapper."""
    cli()


if __name__ == "__main__":
    main()
