"""Tests for the cross-engine validation battery."""

from __future__ import annotations

import math

import pytest

from fracflow.config import HypothesisThresholds
from fracflow.errors import QuadratureError
from fracflow.validation import (
    BATTERY,
    CheckResult,
    ValidationReport,
    check_closed_form,
    check_exit_detection,
    check_hypotheses,
    check_identity,
    run_battery,
)


class TestReport:
    def test_ok(self):
        report = ValidationReport([CheckResult("a", 0.1, 1.0, True)])
        assert report.ok
        assert report.failures == []

    def test_empty_report_is_not_ok(self):
        assert not ValidationReport().ok

    def test_failures_and_csv(self, tmp_path):
        report = ValidationReport([
            CheckResult("a", 0.1, 1.0, True),
            CheckResult("b", 2.0, 1.0, False, "too far"),
        ])
        assert [c.name for c in report.failures] == ["b"]
        text = report.write_csv(tmp_path / "report.csv").read_text().splitlines()
        assert text[0] == "check,achieved,required,passed,detail"
        assert text[2] == "b,2.0,1.0,False,too far"


class TestChecks:
    def test_identity(self, small_mc):
        (result,) = check_identity(True, small_mc)
        assert result.passed, result

    def test_closed_form(self, small_mc):
        results = list(check_closed_form(True, small_mc))
        assert [r.name for r in results] == ["caputo_quad_vs_closed_form", "rl_caputo_bridge"]
        assert all(r.passed for r in results), results

    def test_hypotheses(self, small_mc):
        results = list(check_hypotheses(True, small_mc))
        assert len(results) == 2
        assert all(r.passed for r in results), results

    def test_hypotheses_use_given_thresholds(self, small_mc):
        strict = HypothesisThresholds(h1_floor=1e12)
        results = list(check_hypotheses(True, small_mc, strict))
        assert not any(r.passed for r in results)
        assert all("h1" in r.detail for r in results)

    @pytest.mark.slow
    def test_exit_detection_quick(self, small_mc):
        (result,) = check_exit_detection(True, small_mc)
        assert result.name == "exit_step_ks"
        assert result.passed, result


class TestRunBattery:
    def test_only_filters_by_name(self, small_mc):
        report = run_battery(small_mc, quick=True, only=("hypotheses", "identity"))
        assert {c.name.split("_")[0] for c in report.checks} == {"ml", "hypotheses"}
        assert report.ok

    def test_thresholds_reach_the_checks(self, small_mc):
        strict = HypothesisThresholds(h1_floor=1e12)
        report = run_battery(small_mc, quick=True, only=("hypotheses",), thresholds=strict)
        assert report.checks
        assert not report.ok

    def test_errors_become_failed_checks(self, small_mc, monkeypatch):
        def check_broken(quick, cfg, thresholds):
            raise QuadratureError("test integral", 1e-3)
            yield

        monkeypatch.setattr("fracflow.validation.BATTERY", (check_broken,))
        report = run_battery(small_mc)
        (result,) = report.checks
        assert result.name == "broken"
        assert not result.passed
        assert math.isinf(result.achieved)
        assert "test integral" in result.detail

    def test_battery_order(self):
        names = [check.__name__ for check in BATTERY]
        assert names[0] == "check_identity"
        assert names[-1] == "check_mixed"

    @pytest.mark.slow
    def test_quick_battery_passes(self, small_mc):
        report = run_battery(small_mc, quick=True)
        assert report.ok, [c.to_dict() for c in report.failures]
