"""Tests for settings management."""

from __future__ import annotations

import pytest

from fracflow.config import MonteCarloSettings, Settings
from fracflow.errors import ConfigError


class TestSettings:
    def test_defaults(self, tmp_path):
        settings = Settings.load(tmp_path / "missing.toml")
        assert settings.default_format == "table"
        assert settings.monte_carlo.ds == 2e-3
        assert settings.monte_carlo.horizon_override is None
        assert settings.config_file == tmp_path / "missing.toml"

    def test_round_trip(self, settings, monkeypatch):
        monkeypatch.delenv("FRACFLOW_WORKERS", raising=False)
        settings.default_format = "json"
        settings.ml_terms = 12
        settings.monte_carlo.workers = 3
        settings.hypotheses.h1_floor = 1e-10
        settings.save()

        loaded = Settings.load(settings.config_file)
        assert loaded.default_format == "json"
        assert loaded.ml_terms == 12
        assert loaded.monte_carlo == settings.monte_carlo
        assert loaded.hypotheses.h1_floor == 1e-10
        assert loaded.output_dir == settings.output_dir

    def test_partial_file(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text("[monte_carlo]\nn_paths = 1234\n")
        settings = Settings.load(path)
        assert settings.monte_carlo.n_paths == 1234
        assert settings.monte_carlo.master_seed == MonteCarloSettings().master_seed

    def test_workers_from_environment(self, settings, monkeypatch):
        settings.save()
        monkeypatch.setenv("FRACFLOW_WORKERS", "5")
        assert Settings.load(settings.config_file).monte_carlo.workers == 5

    @pytest.mark.parametrize("value", ["many", "0", "-2", "1.5"])
    def test_bad_workers_in_environment(self, settings, monkeypatch, value):
        settings.save()
        monkeypatch.setenv("FRACFLOW_WORKERS", value)
        with pytest.raises(ConfigError) as info:
            Settings.load(settings.config_file)
        assert info.value.key == "FRACFLOW_WORKERS"
        assert info.value.exit_code == 1
        assert str(info.value).startswith("FRACFLOW_WORKERS: ")

    def test_resolve_output(self, settings, tmp_path):
        assert settings.resolve_output("u.csv") == tmp_path / "runs" / "u.csv"
        assert settings.resolve_output(tmp_path / "abs.csv") == tmp_path / "abs.csv"

    def test_to_dict_sections(self, settings):
        assert set(settings.to_dict()) == {
            "general", "special", "monte_carlo", "hypotheses", "paths",
        }

    def test_ensure_dirs(self, tmp_path):
        settings = Settings(
            output_dir=str(tmp_path / "a" / "runs"), config_file=tmp_path / "b" / "config.toml"
        )
        settings.ensure_dirs()
        assert (tmp_path / "a" / "runs").is_dir()
        assert (tmp_path / "b").is_dir()
