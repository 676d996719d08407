"""Shared pytest fixtures for fracflow tests."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from fracflow.config import MonteCarloSettings, Settings

from golden import golden_table


@pytest.fixture
def runner():
    """Click CLI test runner."""
    return CliRunner()


@pytest.fixture
def settings(tmp_path):
    """Temporary settings with a small Monte Carlo budget."""
    settings = Settings(
        output_dir=str(tmp_path / "runs"),
        config_file=tmp_path / "config.toml",
    )
    settings.monte_carlo = small_mc_settings()
    settings.ensure_dirs()
    return settings


@pytest.fixture
def settings_file(settings):
    """Path of a settings file written from the ``settings`` fixture."""
    settings.save()
    return settings.config_file


def small_mc_settings(**overrides) -> MonteCarloSettings:
    base = {"n_paths": 4000, "ds": 2e-3, "master_seed": 7, "block_size": 1000}
    base.update(overrides)
    return MonteCarloSettings(**base)


@pytest.fixture
def small_mc():
    """Monte Carlo settings for fast tests."""
    return small_mc_settings()


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration dict as JSON and return its path."""

    def write(data: dict, name: str = "run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


@pytest.fixture(scope="session")
def golden():
    """Extended-precision reference values, computed once per session."""
    return golden_table()
