"""Run configuration: the per-run JSON document.

Example::

    {
      "version": 1,
      "problem": {
        "kind": "caputo",
        "kernel": {"type": "stable", "beta": 0.5},
        "lambda": 1.0,
        "g": {"type": "const", "value": 0.0},
        "u_a": 1.0,
        "interval": [0.0, 1.0]
      },
      "method": "closed_form",
      "grid": {"start": 0.1, "stop": 1.0, "count": 10}
    }

Parsing is strict: every unknown key is a ConfigError naming its path,
e.g. ``problem.g.valeu``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from fracflow.config import HypothesisThresholds, MonteCarloSettings
from fracflow.engines.solve_mc import CAPUTO, MIXED, RL, RL_CAPUTO, RL_RL, ProblemSpec
from fracflow.errors import ConfigError, DomainError
from fracflow.kernels import (
    JumpKernel,
    kernel_distributed,
    kernel_multi_term,
    kernel_stable,
    kernel_variable_order,
)

SCHEMA_VERSION = 1
METHODS = ("mc", "quad", "closed_form")


# ─── Source expressions ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class GExpr:
    """A bounded source or boundary function described in the config.

    Kinds: const (value), poly (coefficients c0..ck), sin (a: sin(a·t)),
    exp (a: exp(a·t)), piecewise (breakpoints, values; right-continuous).
    """

    kind: str
    value: float = 0.0
    coefficients: tuple[float, ...] = ()
    rate: float = 1.0
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            out = np.full(t.shape, self.value)
        elif self.kind == "poly":
            out = np.polynomial.polynomial.polyval(t, self.coefficients)
        elif self.kind == "sin":
            out = np.sin(self.rate * t)
        elif self.kind == "exp":
            out = np.exp(self.rate * t)
        else:
            out = np.asarray(self.values)[np.searchsorted(self.breakpoints, t, side="right")]
        return float(out) if out.ndim == 0 else out

    @property
    def is_zero(self) -> bool:
        if self.kind == "const":
            return self.value == 0.0
        if self.kind == "poly":
            return not any(self.coefficients)
        if self.kind == "piecewise":
            return not any(self.values)
        return False


@dataclass(frozen=True)
class Separable:
    """g(t1, t2) = f1(t1)·f2(t2) for the mixed problem."""

    first: GExpr
    second: GExpr

    def __call__(self, t1, t2):
        return np.asarray(self.first(t1)) * np.asarray(self.second(t2))

    @property
    def is_zero(self) -> bool:
        return self.first.is_zero or self.second.is_zero


def _keys(node: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    if not isinstance(node, dict):
        raise ConfigError("expected an object", key=path)
    for key in node:
        if key not in required and key not in optional:
            raise ConfigError("unknown key", key=f"{path}.{key}")
    for key in required:
        if key not in node:
            raise ConfigError("missing required key", key=f"{path}.{key}")
    return node


def _number(node: Any, path: str) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"expected a number, got {node!r}", key=path)
    value = float(node)
    if not math.isfinite(value):
        raise ConfigError("expected a finite number", key=path)
    return value


def _numbers(node: Any, path: str) -> tuple[float, ...]:
    if not isinstance(node, list):
        raise ConfigError("expected a list of numbers", key=path)
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(node))


def _integer(node: Any, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ConfigError(f"expected an integer, got {node!r}", key=path)
    return node


def parse_g(node: Any, path: str) -> GExpr:
    """Parse a one-variable expression; bare numbers mean constants."""
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return GExpr("const", value=_number(node, path))
    _keys(node, path, ("type",), ("value", "coefficients", "a", "breakpoints", "values"))
    kind = node["type"]
    if kind == "const":
        _keys(node, path, ("type", "value"))
        return GExpr("const", value=_number(node["value"], f"{path}.value"))
    if kind == "poly":
        _keys(node, path, ("type", "coefficients"))
        coefficients = _numbers(node["coefficients"], f"{path}.coefficients")
        if not coefficients:
            raise ConfigError("needs at least one coefficient", key=f"{path}.coefficients")
        return GExpr("poly", coefficients=coefficients)
    if kind in ("sin", "exp"):
        _keys(node, path, ("type", "a"))
        return GExpr(kind, rate=_number(node["a"], f"{path}.a"))
    if kind == "piecewise":
        _keys(node, path, ("type", "breakpoints", "values"))
        breaks = _numbers(node["breakpoints"], f"{path}.breakpoints")
        values = _numbers(node["values"], f"{path}.values")
        if list(breaks) != sorted(breaks):
            raise ConfigError("breakpoints must be increasing", key=f"{path}.breakpoints")
        if len(values) != len(breaks) + 1:
            raise ConfigError(
                "needs exactly one more value than breakpoints", key=f"{path}.values"
            )
        return GExpr("piecewise", breakpoints=breaks, values=values)
    raise ConfigError(f"unknown expression type '{kind}'", key=f"{path}.type")


def parse_g2(node: Any, path: str) -> GExpr | Separable:
    """Parse a two-variable source: a constant or {"type": "separable", "t1": .., "t2": ..}."""
    if isinstance(node, dict) and node.get("type") == "separable":
        _keys(node, path, ("type", "t1", "t2"))
        return Separable(parse_g(node["t1"], f"{path}.t1"), parse_g(node["t2"], f"{path}.t2"))
    expr = parse_g(node, path)
    if expr.kind != "const":
        raise ConfigError("two-variable sources are constants or separable", key=f"{path}.type")
    return Separable(expr, GExpr("const", value=1.0))


# ─── Kernels ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class KernelConfig:
    """Declarative kernel description; ``build`` turns it into a JumpKernel."""

    type: str
    beta: float | None = None
    terms: tuple[tuple[GExpr, float], ...] = ()
    beta_fn: GExpr | None = None
    beta_deriv: GExpr | None = None
    beta_range: tuple[float, float] | None = None
    weight: GExpr | None = None
    order: tuple[float, ...] = ()
    nodes: tuple[tuple[float, float], ...] = ()

    @property
    def stable_beta(self) -> float | None:
        return self.beta if self.type == "stable" else None

    def build(self, t_range: tuple[float, float]) -> JumpKernel:
        if self.type == "stable":
            return kernel_stable(self.beta, t_range)
        if self.type == "multi_term":
            weights = [w for w, _ in self.terms]
            return kernel_multi_term(weights, [b for _, b in self.terms], t_range)
        if self.type == "variable_order":
            return kernel_variable_order(
                self.beta_fn, self.beta_deriv, beta_range=self.beta_range, t_range=t_range
            )
        weight = self.weight or GExpr("const", value=1.0)
        order = self.order

        def order_fn(s, t):
            return np.polynomial.polynomial.polyval(s, order) + 0.0 * np.asarray(t)

        return kernel_distributed(lambda s, t: weight(t), order_fn, self.nodes, t_range)


def _trapezoid_nodes(start: float, stop: float, count: int) -> tuple[tuple[float, float], ...]:
    s = np.linspace(start, stop, count)
    h = (stop - start) / (count - 1)
    m = np.full(count, h)
    m[0] = m[-1] = h / 2
    return tuple((float(a), float(b)) for a, b in zip(s, m))


def parse_kernel(node: Any, path: str) -> KernelConfig:
    _keys(
        node, path, ("type",),
        ("beta", "terms", "beta_fn", "beta_deriv", "beta_range", "weight", "order", "nodes"),
    )
    kind = node["type"]
    try:
        if kind == "stable":
            _keys(node, path, ("type", "beta"))
            beta = _number(node["beta"], f"{path}.beta")
            kernel_stable(beta)
            return KernelConfig("stable", beta=beta)
        if kind == "multi_term":
            _keys(node, path, ("type", "terms"))
            if not isinstance(node["terms"], list) or not node["terms"]:
                raise ConfigError("expected a nonempty list", key=f"{path}.terms")
            terms = []
            for i, term in enumerate(node["terms"]):
                where = f"{path}.terms[{i}]"
                _keys(term, where, ("beta",), ("weight",))
                weight = parse_g(term.get("weight", 1.0), f"{where}.weight")
                terms.append((weight, _number(term["beta"], f"{where}.beta")))
            return KernelConfig("multi_term", terms=tuple(terms))
        if kind == "variable_order":
            _keys(node, path, ("type", "beta_fn"), ("beta_deriv", "beta_range"))
            bounds = None
            if "beta_range" in node:
                bounds = _numbers(node["beta_range"], f"{path}.beta_range")
                if len(bounds) != 2:
                    raise ConfigError("expected [lo, hi]", key=f"{path}.beta_range")
            deriv = node.get("beta_deriv")
            return KernelConfig(
                "variable_order",
                beta_fn=parse_g(node["beta_fn"], f"{path}.beta_fn"),
                beta_deriv=None if deriv is None else parse_g(deriv, f"{path}.beta_deriv"),
                beta_range=bounds,
            )
        if kind == "distributed":
            _keys(node, path, ("type", "order", "nodes"), ("weight",))
            order = _numbers(node["order"], f"{path}.order")
            return KernelConfig(
                "distributed",
                weight=parse_g(node.get("weight", 1.0), f"{path}.weight"),
                order=order,
                nodes=_parse_nodes(node["nodes"], f"{path}.nodes"),
            )
    except DomainError as exc:
        raise ConfigError(str(exc), key=path) from exc
    raise ConfigError(f"unknown kernel type '{kind}'", key=f"{path}.type")


def _parse_nodes(node: Any, path: str) -> tuple[tuple[float, float], ...]:
    if isinstance(node, dict):
        _keys(node, path, ("rule", "start", "stop", "count"))
        if node["rule"] != "trapezoid":
            raise ConfigError(f"unknown rule '{node['rule']}'", key=f"{path}.rule")
        count = _integer(node["count"], f"{path}.count")
        if count < 2:
            raise ConfigError("needs at least 2 nodes", key=f"{path}.count")
        return _trapezoid_nodes(
            _number(node["start"], f"{path}.start"), _number(node["stop"], f"{path}.stop"), count
        )
    if not isinstance(node, list) or not node:
        raise ConfigError("expected a nonempty list of [s, weight] pairs", key=path)
    pairs = []
    for i, pair in enumerate(node):
        values = _numbers(pair, f"{path}[{i}]")
        if len(values) != 2:
            raise ConfigError("expected [s, weight]", key=f"{path}[{i}]")
        pairs.append((values[0], values[1]))
    return tuple(pairs)


# ─── Grids ───────────────────────────────────────────────────────────────────


def parse_grid(node: Any, path: str) -> list[float]:
    """An explicit list, or {start, stop, count} for evenly spaced points."""
    if isinstance(node, list):
        points = list(_numbers(node, path))
    else:
        _keys(node, path, ("start", "stop", "count"))
        count = _integer(node["count"], f"{path}.count")
        if count < 1:
            raise ConfigError("count must be positive", key=f"{path}.count")
        start = _number(node["start"], f"{path}.start")
        stop = _number(node["stop"], f"{path}.stop")
        points = [float(v) for v in np.linspace(start, stop, count)]
    if not points:
        raise ConfigError("grid is empty", key=path)
    return points


def parse_grid2d(node: Any, path: str) -> list[tuple[float, float]]:
    """{"points": [[t1, t2], ...]} or the tensor grid {"t1": grid, "t2": grid}."""
    _keys(node, path, (), ("points", "t1", "t2"))
    if "points" in node:
        _keys(node, path, ("points",))
        if not isinstance(node["points"], list) or not node["points"]:
            raise ConfigError("expected a nonempty list", key=f"{path}.points")
        points = []
        for i, pair in enumerate(node["points"]):
            values = _numbers(pair, f"{path}.points[{i}]")
            if len(values) != 2:
                raise ConfigError("expected [t1, t2]", key=f"{path}.points[{i}]")
            points.append((values[0], values[1]))
        return points
    _keys(node, path, ("t1", "t2"))
    first = parse_grid(node["t1"], f"{path}.t1")
    second = parse_grid(node["t2"], f"{path}.t2")
    return [(t1, t2) for t1 in first for t2 in second]


# ─── Run configuration ───────────────────────────────────────────────────────


@dataclass
class ProblemConfig:
    kind: str
    kernel: KernelConfig
    lam: float = 0.0
    g: GExpr | Separable | None = None
    u_a: float = 0.0
    interval: tuple[float, float] = (0.0, 1.0)
    kernel2: KernelConfig | None = None
    phi: GExpr | None = None
    interval2: tuple[float, float] = (0.0, 1.0)
    variant: str = RL_CAPUTO

    @property
    def g_breaks(self) -> tuple[float, ...]:
        return self.g.breakpoints if isinstance(self.g, GExpr) else ()

    def spec(self, thresholds: HypothesisThresholds | None = None) -> ProblemSpec:
        """The ProblemSpec consumed by the Monte Carlo engines."""
        a, b = self.interval
        g = None if self.g is None or self.g.is_zero else self.g
        try:
            return ProblemSpec(
                kind=self.kind,
                kernel=self.kernel.build((a, b)),
                lam=self.lam,
                g=g,
                u_a=self.u_a,
                a=a,
                b=b,
                kernel2=self.kernel2.build(self.interval2) if self.kernel2 else None,
                phi=self.phi,
                b2=self.interval2[1],
                variant=self.variant,
                g_breaks=self.g_breaks,
                thresholds=thresholds or HypothesisThresholds(),
            )
        except DomainError as exc:
            raise ConfigError(str(exc), key="problem") from exc


@dataclass
class RunConfig:
    """Parsed run configuration."""

    problem: ProblemConfig | None = None
    method: str = "mc"
    grid: list[float] = field(default_factory=list)
    grid2d: list[tuple[float, float]] = field(default_factory=list)
    mc: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    output: str | None = None
    report: bool = False
    dump_paths: int = 0
    exit_law: dict[str, Any] = field(default_factory=dict)
    ml: dict[str, Any] = field(default_factory=dict)
    density: dict[str, Any] = field(default_factory=dict)
    validate: dict[str, Any] = field(default_factory=dict)


def _parse_problem(node: Any) -> ProblemConfig:
    path = "problem"
    _keys(
        node, path, ("kind", "kernel"),
        ("lambda", "g", "u_a", "interval", "kernel2", "phi", "interval2", "variant"),
    )
    kind = node["kind"]
    if kind not in (CAPUTO, RL, MIXED):
        raise ConfigError(f"unknown problem kind '{kind}'", key=f"{path}.kind")
    lam = _number(node.get("lambda", 0.0), f"{path}.lambda")
    interval = _numbers(node.get("interval", [0.0, 1.0]), f"{path}.interval")
    if len(interval) != 2 or not interval[0] < interval[1]:
        raise ConfigError("expected [a, b] with a < b", key=f"{path}.interval")
    problem = ProblemConfig(
        kind=kind,
        kernel=parse_kernel(node["kernel"], f"{path}.kernel"),
        lam=lam,
        u_a=_number(node.get("u_a", 0.0), f"{path}.u_a"),
        interval=(interval[0], interval[1]),
    )
    if kind == RL and problem.u_a != 0.0:
        raise ConfigError("the RL problem has zero boundary data", key=f"{path}.u_a")
    if kind == MIXED:
        if interval[0] != 0.0:
            raise ConfigError("the mixed problem lives on [0, b1]", key=f"{path}.interval")
        if "kernel2" not in node:
            raise ConfigError("missing required key", key=f"{path}.kernel2")
        if "u_a" in node:
            raise ConfigError("not used by the mixed problem; use phi", key=f"{path}.u_a")
        problem.kernel2 = parse_kernel(node["kernel2"], f"{path}.kernel2")
        interval2 = _numbers(node.get("interval2", [0.0, 1.0]), f"{path}.interval2")
        if len(interval2) != 2 or interval2[0] != 0.0 or not interval2[1] > 0.0:
            raise ConfigError("expected [0, b2] with b2 > 0", key=f"{path}.interval2")
        problem.interval2 = (0.0, interval2[1])
        problem.variant = node.get("variant", RL_CAPUTO)
        if problem.variant not in (RL_CAPUTO, RL_RL):
            raise ConfigError(f"unknown variant '{problem.variant}'", key=f"{path}.variant")
        if "g" in node:
            problem.g = parse_g2(node["g"], f"{path}.g")
        if "phi" in node:
            problem.phi = parse_g(node["phi"], f"{path}.phi")
            if abs(problem.phi(0.0)) > 1e-12:
                raise ConfigError("boundary data must vanish at 0", key=f"{path}.phi")
    else:
        for key in ("kernel2", "phi", "interval2", "variant"):
            if key in node:
                raise ConfigError("only used by the mixed problem", key=f"{path}.{key}")
        if "g" in node:
            problem.g = parse_g(node["g"], f"{path}.g")
    return problem


def _parse_mc(node: Any, defaults: MonteCarloSettings) -> MonteCarloSettings:
    path = "mc"
    _keys(node, path, (), ("n_paths", "ds", "master_seed", "horizon_override", "block_size"))
    mc = replace(defaults)
    if "n_paths" in node:
        mc.n_paths = _integer(node["n_paths"], f"{path}.n_paths")
        if mc.n_paths < 2:
            raise ConfigError("needs at least 2 paths", key=f"{path}.n_paths")
    if "ds" in node:
        mc.ds = _number(node["ds"], f"{path}.ds")
        if not mc.ds > 0.0:
            raise ConfigError("must be positive", key=f"{path}.ds")
    if "master_seed" in node:
        mc.master_seed = _integer(node["master_seed"], f"{path}.master_seed")
        if mc.master_seed < 0:
            raise ConfigError("must be nonnegative", key=f"{path}.master_seed")
    if "block_size" in node:
        mc.block_size = _integer(node["block_size"], f"{path}.block_size")
        if mc.block_size < 1:
            raise ConfigError("must be positive", key=f"{path}.block_size")
    if node.get("horizon_override") is not None:
        mc.horizon_override = _number(node["horizon_override"], f"{path}.horizon_override")
        if not mc.horizon_override > 0.0:
            raise ConfigError("must be positive", key=f"{path}.horizon_override")
    return mc


def _parse_section(node: Any, path: str, grids: tuple[str, ...], numbers: tuple[str, ...]):
    _keys(node, path, (), grids + numbers)
    out: dict[str, Any] = {}
    for key in grids:
        if key in node:
            out[key] = parse_grid(node[key], f"{path}.{key}")
    for key in numbers:
        if key in node:
            out[key] = _number(node[key], f"{path}.{key}")
    return out


def parse_run_config(data: Any, defaults: MonteCarloSettings | None = None) -> RunConfig:
    """Validate a decoded JSON document and build a RunConfig."""
    _keys(
        data, "$", ("version",),
        ("problem", "method", "grid", "mc", "output", "report", "dump_paths",
         "exit_law", "ml", "density", "validate"),
    )
    if data["version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {data['version']!r}", key="version")
    cfg = RunConfig(mc=_parse_mc(data.get("mc", {}), defaults or MonteCarloSettings()))
    cfg.method = data.get("method", "mc")
    if cfg.method not in METHODS:
        raise ConfigError(f"expected one of {', '.join(METHODS)}", key="method")

    if "problem" in data:
        cfg.problem = _parse_problem(data["problem"])
        problem = cfg.problem
        if cfg.method != "mc":
            kernels = [problem.kernel] + ([problem.kernel2] if problem.kernel2 else [])
            if any(k.stable_beta is None for k in kernels):
                raise ConfigError(
                    f"method '{cfg.method}' needs stable kernels; use 'mc'", key="method"
                )
            if problem.kind == MIXED and cfg.method == "closed_form":
                raise ConfigError("the mixed problem has no closed form", key="method")
    if "grid" in data:
        if cfg.problem is not None and cfg.problem.kind == MIXED:
            cfg.grid2d = parse_grid2d(data["grid"], "grid")
        else:
            cfg.grid = parse_grid(data["grid"], "grid")
    if "output" in data:
        if not isinstance(data["output"], str):
            raise ConfigError("expected a file path", key="output")
        cfg.output = data["output"]
    if "report" in data:
        if not isinstance(data["report"], bool):
            raise ConfigError("expected true or false", key="report")
        cfg.report = data["report"]
    if "dump_paths" in data:
        cfg.dump_paths = _integer(data["dump_paths"], "dump_paths")
    if "exit_law" in data:
        cfg.exit_law = _parse_section(data["exit_law"], "exit_law", ("s",), ("lambda",))
    if "ml" in data:
        cfg.ml = _parse_section(data["ml"], "ml", ("z",), ("beta", "beta2"))
    if "density" in data:
        cfg.density = _parse_section(data["density"], "density", ("x",), ("beta",))
    if "validate" in data:
        node = _keys(data["validate"], "validate", (), ("quick", "n_paths"))
        if "quick" in node and not isinstance(node["quick"], bool):
            raise ConfigError("expected true or false", key="validate.quick")
        cfg.validate = dict(node)
        if "n_paths" in node:
            _integer(node["n_paths"], "validate.n_paths")
    return cfg


def load_run_config(path: Path | str, defaults: MonteCarloSettings | None = None) -> RunConfig:
    """Read and parse a run configuration file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_run_config(data, defaults)


def as_callable(expr: GExpr | Separable | None) -> Callable | None:
    """None for missing or identically zero expressions."""
    if expr is None or expr.is_zero:
        return None
    return expr
