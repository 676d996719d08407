"""Settings management for fracflow.

Settings file: ~/.config/fracflow/config.toml
Run outputs:   ~/.local/share/fracflow/runs/ (relative ``output`` paths of run configs)

Settings hold defaults shared by every run (Monte Carlo budget, seeds,
special-function switch points, validator thresholds). The per-run problem
description is a separate JSON document, see ``fracflow.problem``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import toml

from fracflow.errors import ConfigError

# XDG-compliant default paths
DEFAULT_CONFIG_DIR = Path(os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config")) / "fracflow"
DEFAULT_DATA_DIR = (
    Path(os.environ.get("XDG_DATA_HOME", Path.home() / ".local" / "share")) / "fracflow"
)
DEFAULT_CONFIG_FILE = DEFAULT_CONFIG_DIR / "config.toml"
DEFAULT_OUTPUT_DIR = DEFAULT_DATA_DIR / "runs"

WORKERS_ENV = "FRACFLOW_WORKERS"


@dataclass
class MonteCarloSettings:
    """Budget and reproducibility knobs for the path simulators."""

    n_paths: int = 100_000
    ds: float = 2e-3
    master_seed: int = 20240601
    block_size: int = 2048
    workers: int = 1
    epsilon_fraction: float = 1e-4
    horizon_factor: float = 50.0
    horizon_override: float | None = None


@dataclass
class HypothesisThresholds:
    """Pass/fail thresholds of the kernel hypothesis validator."""

    moment_ceiling: float = 1e8
    small_jump_tol: float = 1e-2
    h1_floor: float = 1e-12
    epsilon_fraction: float = 0.05


@dataclass
class Settings:
    """Application settings."""

    # General
    default_format: str = "table"
    verbose: bool = False

    # Special functions
    ml_switch: float = 10.0
    ml_terms: int = 8

    monte_carlo: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    hypotheses: HypothesisThresholds = field(default_factory=HypothesisThresholds)

    output_dir: str = str(DEFAULT_OUTPUT_DIR)

    # Paths (not serialized)
    config_file: Path = field(default=DEFAULT_CONFIG_FILE, repr=False)

    @classmethod
    def load(cls, config_path: Path | None = None) -> Settings:
        """Load settings from TOML file, falling back to defaults."""
        path = config_path or DEFAULT_CONFIG_FILE
        settings = cls(config_file=path)

        if path.exists():
            data = toml.load(path)
            general = data.get("general", {})
            special = data.get("special", {})
            mc = data.get("monte_carlo", {})
            hyp = data.get("hypotheses", {})
            paths = data.get("paths", {})

            settings.default_format = general.get("default_format", settings.default_format)
            settings.verbose = general.get("verbose", settings.verbose)
            settings.ml_switch = float(special.get("ml_switch", settings.ml_switch))
            settings.ml_terms = int(special.get("ml_terms", settings.ml_terms))

            m = settings.monte_carlo
            m.n_paths = int(mc.get("n_paths", m.n_paths))
            m.ds = float(mc.get("ds", m.ds))
            m.master_seed = int(mc.get("master_seed", m.master_seed))
            m.block_size = int(mc.get("block_size", m.block_size))
            m.workers = int(mc.get("workers", m.workers))
            m.epsilon_fraction = float(mc.get("epsilon_fraction", m.epsilon_fraction))
            m.horizon_factor = float(mc.get("horizon_factor", m.horizon_factor))

            h = settings.hypotheses
            h.moment_ceiling = float(hyp.get("moment_ceiling", h.moment_ceiling))
            h.small_jump_tol = float(hyp.get("small_jump_tol", h.small_jump_tol))
            h.h1_floor = float(hyp.get("h1_floor", h.h1_floor))
            h.epsilon_fraction = float(hyp.get("epsilon_fraction", h.epsilon_fraction))

            settings.output_dir = paths.get("output_dir", settings.output_dir)

        env_workers = os.environ.get(WORKERS_ENV)
        if env_workers:
            try:
                workers = int(env_workers)
            except ValueError:
                workers = 0
            if workers < 1:
                raise ConfigError(
                    f"expected a positive integer, got {env_workers!r}", key=WORKERS_ENV
                )
            settings.monte_carlo.workers = workers

        return settings

    def to_dict(self) -> dict:
        """Serializable view, section by section as in the TOML file."""
        m = self.monte_carlo
        h = self.hypotheses
        return {
            "general": {
                "default_format": self.default_format,
                "verbose": self.verbose,
            },
            "special": {
                "ml_switch": self.ml_switch,
                "ml_terms": self.ml_terms,
            },
            "monte_carlo": {
                "n_paths": m.n_paths,
                "ds": m.ds,
                "master_seed": m.master_seed,
                "block_size": m.block_size,
                "workers": m.workers,
                "epsilon_fraction": m.epsilon_fraction,
                "horizon_factor": m.horizon_factor,
            },
            "hypotheses": {
                "moment_ceiling": h.moment_ceiling,
                "small_jump_tol": h.small_jump_tol,
                "h1_floor": h.h1_floor,
                "epsilon_fraction": h.epsilon_fraction,
            },
            "paths": {
                "output_dir": self.output_dir,
            },
        }

    def save(self) -> None:
        """Save settings to TOML file."""
        self.config_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_file, "w") as f:
            toml.dump(self.to_dict(), f)

    def resolve_output(self, target: str | Path) -> Path:
        """Output path named in a run configuration; relative paths live under output_dir."""
        path = Path(target).expanduser()
        return path if path.is_absolute() else Path(self.output_dir) / path

    def ensure_dirs(self) -> None:
        """Create required directories."""
        Path(self.output_dir).mkdir(parents=True, exist_ok=True)
        self.config_file.parent.mkdir(parents=True, exist_ok=True)
