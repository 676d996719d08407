"""Tests for the Monte Carlo engines."""

from __future__ import annotations

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from fracflow.engines.solve_mc import (
    CAPUTO,
    MIXED,
    RL,
    RL_RL,
    ProblemSpec,
    exit_time_samples,
    laplace_exit_mc,
    laplace_exit_mixed_mc,
    solve_caputo_mc,
    solve_mixed_mc,
    solve_rl_mc,
)
from fracflow.config import HypothesisThresholds
from fracflow.engines.solve_quad import laplace_exit_mixed_quad, solve_mixed_quad
from fracflow.errors import DomainError, HorizonError, HypothesisWarning
from fracflow.kernels import kernel_multi_term, kernel_stable
from fracflow.paths import expected_exit_time_stable
from fracflow.results import McEstimate
from fracflow.special_fn import mittag_leffler

E_HALF_MINUS_ONE = 0.42758357615580705
# Allowance for the first-passage discretization τ̂ >= τ.
STEP_BIAS = 5e-3


def caputo(beta=0.5, **kwargs):
    return ProblemSpec(kind=CAPUTO, kernel=kernel_stable(beta), **kwargs)


class TestProblemSpec:
    def test_rl_forbids_boundary_data(self):
        with pytest.raises(DomainError):
            ProblemSpec(kind=RL, kernel=kernel_stable(0.5), u_a=1.0)

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            caputo(lam=-0.5)

    def test_empty_interval(self):
        with pytest.raises(DomainError):
            caputo(a=1.0, b=1.0)

    def test_mixed_requirements(self):
        with pytest.raises(DomainError):
            ProblemSpec(kind=MIXED, kernel=kernel_stable(0.5))
        with pytest.raises(DomainError):
            ProblemSpec(
                kind=MIXED, kernel=kernel_stable(0.5), kernel2=kernel_stable(0.5),
                phi=lambda t: 1.0,
            )
        with pytest.raises(DomainError):
            ProblemSpec(kind="neumann", kernel=kernel_stable(0.5))


class TestCaputoMC:
    def test_homogeneous_half_order(self, small_mc):
        curve = solve_caputo_mc(caputo(lam=1.0, u_a=1.0), [0.0, 1.0], small_mc)
        first, last = curve.estimates()
        assert first.value == 1.0 and first.std_error == 0.0
        assert last.agrees_with(E_HALF_MINUS_ONE, n_se=4.0, floor=STEP_BIAS)
        assert curve.method == "mc"

    def test_zero_problem_is_exact(self, small_mc):
        curve = solve_caputo_mc(caputo(lam=1.0), [0.3, 0.9], small_mc)
        assert curve.values == [0.0, 0.0]
        assert curve.std_errors == [0.0, 0.0]

    def test_rerun_is_identical(self, small_mc):
        spec = caputo(lam=1.0, u_a=1.0, g=np.sin)
        first = solve_caputo_mc(spec, [0.5, 1.0], small_mc)
        second = solve_caputo_mc(spec, [0.5, 1.0], replace(small_mc, workers=2))
        assert first.values == second.values
        assert first.std_errors == second.std_errors

    def test_caputo_rl_bridge_on_shared_paths(self, small_mc):
        # Stopped and killed paths share their exit times, and discounting is exact per step.
        lam, u_a = 1.0, 2.0
        u = solve_caputo_mc(caputo(lam=lam, u_a=u_a, g=np.cos), [0.7], small_mc)
        rl = ProblemSpec(kind=RL, kernel=kernel_stable(0.5), lam=lam,
                         g=lambda t: np.cos(t) - lam * u_a)
        w = solve_rl_mc(rl, [0.7], small_mc)
        assert u.values[0] - u_a == pytest.approx(w.values[0], abs=1e-9)

    def test_grid_outside_interval(self, small_mc):
        with pytest.raises(DomainError):
            solve_caputo_mc(caputo(lam=1.0, u_a=1.0), [1.5], small_mc)

    def test_wrong_kind(self, small_mc):
        with pytest.raises(DomainError):
            solve_rl_mc(caputo(lam=1.0), [0.5], small_mc)

    def test_short_horizon_is_refused(self, small_mc):
        cfg = replace(small_mc, horizon_override=0.01)
        with pytest.raises(HorizonError):
            solve_caputo_mc(caputo(lam=1.0, u_a=1.0), [1.0], cfg)

    def test_degenerate_kernel_warns_without_discount(self, small_mc):
        spec = ProblemSpec(
            kind=CAPUTO, kernel=kernel_multi_term([lambda t: t], [0.5]), u_a=1.0
        )
        with pytest.warns(HypothesisWarning):
            curve = solve_caputo_mc(spec, [0.0], small_mc)
        assert curve.values == [1.0]

    def test_hypothesis_thresholds_drive_the_warning(self, small_mc):
        strict = caputo(u_a=1.0, thresholds=HypothesisThresholds(h1_floor=1e12))
        with pytest.warns(HypothesisWarning, match="stable"):
            solve_caputo_mc(strict, [0.0], small_mc)
        with warnings.catch_warnings():
            warnings.simplefilter("error", HypothesisWarning)
            curve = solve_caputo_mc(caputo(u_a=1.0), [0.0], small_mc)
        assert curve.values == [1.0]


class TestRLMC:
    def test_zero_source(self, small_mc):
        spec = ProblemSpec(kind=RL, kernel=kernel_stable(0.5), lam=1.0)
        curve = solve_rl_mc(spec, [0.0, 0.5, 1.0], small_mc)
        assert curve.values == [0.0, 0.0, 0.0]

    def test_constant_source(self, small_mc):
        # λ·w = 1 - E[e^(-λτ)] for g ≡ 1
        spec = ProblemSpec(kind=RL, kernel=kernel_stable(0.5), lam=1.0, g=lambda t: 1.0)
        (estimate,) = solve_rl_mc(spec, [1.0], small_mc).estimates()
        assert estimate.agrees_with(1.0 - E_HALF_MINUS_ONE, n_se=4.0, floor=STEP_BIAS)

    def test_expected_exit_time(self, small_mc):
        spec = ProblemSpec(kind=RL, kernel=kernel_stable(0.7), g=lambda t: 1.0)
        (estimate,) = solve_rl_mc(spec, [0.8], small_mc).estimates()
        assert estimate.agrees_with(
            expected_exit_time_stable(0.7, 0.8, 0.0), n_se=4.0, floor=STEP_BIAS
        )


class TestExitLaw:
    def test_exact_samples(self, small_mc):
        taus, exited = exit_time_samples(kernel_stable(0.5), 1.0, 0.0, small_mc)
        assert taus.size == small_mc.n_paths
        assert exited.all()
        assert np.all(taus > 0.0)

    def test_laplace_stable(self, small_mc):
        estimate = laplace_exit_mc(kernel_stable(0.5), 1.0, 1.0, 0.0, small_mc)
        assert estimate.agrees_with(E_HALF_MINUS_ONE, n_se=4.0)

    def test_weighted_stable_kernel(self, small_mc):
        # Weight c rescales the clock: E[e^(-λτ)] = E_β(-λ(t-a)^β / c)
        estimate = laplace_exit_mc(kernel_multi_term([2.0], [0.5]), 1.0, 1.0, 0.0, small_mc)
        assert estimate.agrees_with(mittag_leffler(0.5, -0.5), n_se=4.0)

    def test_simulated_kernel(self, small_mc):
        k = kernel_multi_term([0.5, 0.5], [0.5, 0.5])
        estimate = laplace_exit_mc(k, 1.0, 1.0, 0.0, small_mc)
        assert estimate.agrees_with(E_HALF_MINUS_ONE, n_se=4.0, floor=STEP_BIAS)

    def test_trivial_cases(self, small_mc):
        assert laplace_exit_mc(kernel_stable(0.5), 1.0, 0.3, 0.3, small_mc) == McEstimate.exact(
            1.0, small_mc.n_paths
        )
        assert laplace_exit_mc(kernel_stable(0.5), 0.0, 1.0, 0.0, small_mc).value == 1.0

    def test_rejects_bad_arguments(self, small_mc):
        with pytest.raises(DomainError):
            laplace_exit_mc(kernel_stable(0.5), -1.0, 1.0, 0.0, small_mc)
        with pytest.raises(DomainError):
            laplace_exit_mc(kernel_stable(0.5), 1.0, 0.0, 1.0, small_mc)


class TestMixedMC:
    def spec(self, **kwargs):
        base = {
            "kind": MIXED, "kernel": kernel_stable(0.5), "kernel2": kernel_stable(0.7),
            "lam": 1.0, "b": 2.0, "b2": 2.0,
        }
        base.update(kwargs)
        return ProblemSpec(**base)

    def test_boundary_rows(self, small_mc):
        curve = solve_mixed_mc(
            self.spec(phi=lambda t: t * (1.0 - t)), [(0.0, 0.7), (0.4, 0.0)], small_mc
        )
        assert curve.values == [0.0, pytest.approx(0.24)]
        assert curve.tie_fractions == [0.0, 0.0]

    def test_constant_source_matches_quadrature(self, small_mc):
        spec = self.spec(g=lambda x, y: 1.0, variant=RL_RL)
        (estimate,) = solve_mixed_mc(spec, [(0.8, 0.6)], small_mc).estimates()
        (reference,) = solve_mixed_quad(
            0.5, 0.7, 1.0, lambda x, y: 1.0, None, [(0.8, 0.6)], variant=RL_RL
        ).values
        assert estimate.agrees_with(reference, n_se=4.0, floor=STEP_BIAS)

    def test_boundary_term_matches_quadrature(self, small_mc):
        def phi(t):
            return np.sin(math.pi * t / 2.0)

        (estimate,) = solve_mixed_mc(self.spec(phi=phi), [(1.0, 0.5)], small_mc).estimates()
        (reference,) = solve_mixed_quad(0.5, 0.7, 1.0, None, phi, [(1.0, 0.5)]).values
        assert estimate.agrees_with(reference, n_se=4.0, floor=1e-2)

    def test_point_outside_rectangle(self, small_mc):
        with pytest.raises(DomainError):
            solve_mixed_mc(self.spec(), [(2.5, 0.5)], small_mc)

    def test_mixed_exit_law(self, small_mc):
        estimate = laplace_exit_mixed_mc(
            kernel_stable(0.5), kernel_stable(0.7), 1.0, 0.8, 0.6, small_mc
        )
        reference = laplace_exit_mixed_quad(0.5, 0.7, 1.0, 0.8, 0.6)
        assert estimate.agrees_with(reference, n_se=4.0, floor=STEP_BIAS)
        assert laplace_exit_mixed_mc(
            kernel_stable(0.5), kernel_stable(0.7), 1.0, 0.0, 0.6, small_mc
        ).value == 1.0
