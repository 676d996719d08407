"""Tests for path simulation, exact samplers and stable-case densities."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from fracflow.errors import DomainError, HorizonError
from fracflow.kernels import kernel_multi_term, kernel_stable, kernel_variable_order
from fracflow.paths import (
    KILLED,
    NS_EXIT,
    NS_PATH,
    STOPPED,
    discount_weights,
    exit_time_density_mixed_stable,
    exit_time_density_stable,
    exit_time_survival_stable,
    exit_times_stable_exact,
    expected_exit_time_stable,
    joint_density_stable,
    resolve_horizon,
    sample_exit_time_stable_exact,
    sample_stable_increment,
    simulate_mixed_paths,
    simulate_path,
    simulate_paths,
    stable_draws,
    stream,
    transition_density_stable,
)
from fracflow.quadrature import integrate
from fracflow.special_fn import mittag_leffler


def within(samples: np.ndarray, expected: float, n_se: float = 4.0) -> bool:
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    return abs(samples.mean() - expected) <= n_se * se


class TestStreams:
    """Tests for the counter-based random streams."""

    def test_same_key_same_draws(self):
        a = stream(11, 3).random(5)
        b = stream(11, 3).random(5)
        assert np.array_equal(a, b)

    def test_keys_are_independent(self):
        base = stream(11, 3).random(5)
        assert not np.array_equal(base, stream(11, 4).random(5))
        assert not np.array_equal(base, stream(12, 3).random(5))
        assert not np.array_equal(base, stream(11, 3, NS_EXIT).random(5))
        assert np.array_equal(base, stream(11, 3, NS_PATH).random(5))


class TestExactSamplers:
    """Tests for stable draws and exact exit times."""

    def test_stable_laplace_transform(self):
        w = stable_draws(0.6, 20_000, stream(1, 0))
        assert within(np.exp(-w), math.exp(-1.0))
        assert within(np.exp(-2.0 * w), math.exp(-(2.0**0.6)))

    def test_draws_are_positive(self):
        assert np.all(stable_draws(0.3, 5000, stream(2, 0)) > 0.0)

    def test_increment_scaling(self):
        value = sample_stable_increment(0.5, 0.01, stream(3, 0))
        expected = 0.01**2 * stable_draws(0.5, 1, stream(3, 0))[0]
        assert value == pytest.approx(expected, rel=1e-14)

    def test_increment_rejects_bad_step(self):
        with pytest.raises(DomainError):
            sample_stable_increment(0.5, 0.0, stream(3, 0))

    def test_exit_time_laplace(self):
        taus = exit_times_stable_exact(0.5, 1.0, 0.0, 20_000, stream(4, 0))
        assert within(np.exp(-taus), mittag_leffler(0.5, -1.0))

    def test_exit_time_mean(self):
        taus = exit_times_stable_exact(0.7, 1.5, 0.5, 20_000, stream(5, 0))
        assert within(taus, expected_exit_time_stable(0.7, 1.5, 0.5))

    def test_exit_time_at_barrier(self):
        assert np.array_equal(exit_times_stable_exact(0.5, 1.0, 1.0, 3, stream(6, 0)), [0, 0, 0])
        with pytest.raises(DomainError):
            exit_times_stable_exact(0.5, 0.5, 1.0, 3, stream(6, 0))

    def test_single_exit_time(self):
        tau = sample_exit_time_stable_exact(0.5, 1.0, 0.0, stream(7, 0))
        assert tau > 0.0


class TestStableDensities:
    """Tests for transition and exit-time densities of the stable process."""

    def test_transition_density_normalized(self):
        mass = integrate(
            lambda r: transition_density_stable(0.5, 0.3, 1.0, r), -math.inf, 1.0,
            points=[0.0], label="transition mass",
        )
        assert mass == pytest.approx(1.0, abs=1e-7)

    def test_transition_density_zero_above_start(self):
        assert transition_density_stable(0.5, 0.3, 1.0, 1.2) == 0.0
        assert transition_density_stable(0.5, 0.0, 1.0, 0.5) == 0.0

    def test_exit_density_integrates_to_one(self):
        for beta in (0.3, 0.7):
            mass = integrate(
                lambda s, beta=beta: exit_time_density_stable(beta, 1.0, 0.0, s),
                0.0, math.inf, points=[1.0], epsabs=1e-10, epsrel=1e-9, label="exit mass",
            )
            assert mass == pytest.approx(1.0, abs=1e-6)

    def test_survival_complements_density(self):
        head = integrate(
            lambda s: exit_time_density_stable(0.5, 1.0, 0.0, s), 0.0, 0.8,
            epsabs=1e-12, label="exit cdf",
        )
        assert head + exit_time_survival_stable(0.5, 1.0, 0.0, 0.8) == pytest.approx(1.0, abs=1e-8)

    def test_survival_edges(self):
        assert exit_time_survival_stable(0.5, 1.0, 0.0, 0.0) == 1.0
        assert exit_time_survival_stable(0.5, 1.0, 1.0, 0.3) == 0.0

    def test_expected_exit_time(self):
        assert expected_exit_time_stable(0.5, 1.0, 0.0) == pytest.approx(1.0 / math.gamma(1.5))

    def test_exit_density_rejects_start_on_barrier(self):
        with pytest.raises(DomainError):
            exit_time_density_stable(0.5, 1.0, 1.0, 0.2)

    def test_joint_density_marginal(self):
        # Integrating the joint density over the exit time gives the transition density.
        s, r = 0.2, 0.6
        marginal = integrate(
            lambda xi: joint_density_stable(0.5, 1.0, 0.0, s, r, xi), s, math.inf,
            points=[s + 0.5], epsabs=1e-10, label="joint marginal",
        )
        assert marginal == pytest.approx(transition_density_stable(0.5, s, 1.0, r), rel=1e-6)

    def test_joint_density_support(self):
        assert joint_density_stable(0.5, 1.0, 0.0, 0.3, 0.5, 0.2) == 0.0
        assert joint_density_stable(0.5, 1.0, 0.0, 0.1, -0.1, 0.5) == 0.0

    def test_mixed_density_integrates_to_one(self):
        mass = integrate(
            lambda s: exit_time_density_mixed_stable(0.5, 0.7, 1.0, 0.5, s), 0.0, math.inf,
            points=[0.5, 1.0], epsabs=1e-10, epsrel=1e-8, label="mixed exit mass",
        )
        assert mass == pytest.approx(1.0, abs=1e-6)


class TestSimulatePaths:
    """Tests for the block simulator."""

    def test_workers_do_not_change_results(self, small_mc):
        k = kernel_stable(0.5)
        one = simulate_paths(k, 1.0, 0.0, small_mc, mode=STOPPED, lam=1.0, g=np.sin)
        many = simulate_paths(
            k, 1.0, 0.0, replace(small_mc, workers=3), mode=STOPPED, lam=1.0, g=np.sin
        )
        assert np.array_equal(one.exit_time, many.exit_time)
        assert np.array_equal(one.functional, many.functional)

    def test_thinning_workers_do_not_change_results(self, small_mc):
        k = kernel_multi_term([1.0, 0.5], [0.4, 0.7])
        cfg = replace(small_mc, n_paths=1500, block_size=500)
        one = simulate_paths(k, 1.0, 0.0, cfg, mode=KILLED, lam=1.0)
        many = simulate_paths(k, 1.0, 0.0, replace(cfg, workers=2), mode=KILLED, lam=1.0)
        assert np.array_equal(one.exit_time, many.exit_time)

    def test_stopped_paths_land_on_barrier(self, small_mc):
        batch = simulate_paths(kernel_stable(0.5), 1.0, 0.2, small_mc, mode=STOPPED, lam=1.0)
        assert np.all(batch.final_state[batch.exited] == 0.2)

    def test_killed_paths_are_removed(self, small_mc):
        batch = simulate_paths(kernel_stable(0.5), 1.0, 0.2, small_mc, mode=KILLED, lam=1.0)
        assert np.all(np.isnan(batch.final_state[batch.exited]))

    def test_exit_times_on_step_grid(self, small_mc):
        batch = simulate_paths(kernel_stable(0.5), 1.0, 0.0, small_mc, mode=KILLED, lam=1.0)
        steps = batch.exit_time[batch.exited] / small_mc.ds
        assert np.allclose(steps, np.round(steps))
        assert np.all(steps >= 1)

    def test_laplace_of_exit_time(self, small_mc):
        batch = simulate_paths(kernel_stable(0.5), 1.0, 0.0, small_mc, mode=KILLED, lam=1.0)
        assert batch.n_paths == small_mc.n_paths
        assert batch.truncated_fraction == 0.0
        assert within(batch.discount(1.0), mittag_leffler(0.5, -1.0), n_se=5.0)

    def test_constant_source_functional(self, small_mc):
        # ∫_0^τ e^(-s) ds = 1 - e^(-τ) path by path, up to the last step
        batch = simulate_paths(
            kernel_stable(0.5), 1.0, 0.0, small_mc, mode=KILLED, lam=1.0, g=lambda t: 1.0
        )
        assert np.allclose(batch.functional, 1.0 - np.exp(-batch.exit_time), atol=1e-12)

    def test_start_on_barrier(self, small_mc):
        batch = simulate_paths(kernel_stable(0.5), 0.0, 0.0, small_mc, mode=STOPPED, lam=1.0)
        assert np.all(batch.exit_time == 0.0)
        assert np.all(batch.exited)

    def test_trajectories_recorded(self, small_mc):
        batch = simulate_paths(
            kernel_stable(0.5), 1.0, 0.0, small_mc, mode=STOPPED, lam=1.0, record=3
        )
        assert sorted(batch.trajectories) == [0, 1, 2]
        times, states = batch.trajectories[0]
        assert states[0] == 1.0
        assert np.all(np.diff(states) <= 0.0)
        assert times.shape == states.shape

    def test_query_state(self, small_mc):
        batch = simulate_paths(
            kernel_stable(0.5), 1.0, 0.0, small_mc, mode=STOPPED, lam=1.0, query_time=0.1
        )
        assert batch.state_at_query.shape == (small_mc.n_paths,)
        assert np.all((batch.state_at_query >= 0.0) & (batch.state_at_query <= 1.0))
        assert len(batch.exit_samples()) == small_mc.n_paths

    def test_short_horizon_truncates(self, small_mc):
        batch = simulate_paths(
            kernel_stable(0.5), 1.0, 0.0, small_mc, mode=KILLED, lam=1.0, horizon=0.01
        )
        assert batch.truncated_fraction > 0.5
        assert np.all(batch.discount(1.0)[~batch.exited] == 0.0)

    def test_bad_arguments(self, small_mc):
        k = kernel_stable(0.5)
        with pytest.raises(DomainError):
            simulate_paths(k, 1.0, 0.0, small_mc, mode="reflected")
        with pytest.raises(DomainError):
            simulate_paths(k, 1.0, 0.0, small_mc, lam=-1.0)
        with pytest.raises(DomainError):
            simulate_paths(k, -1.0, 0.0, small_mc)

    def test_too_many_steps(self, small_mc):
        with pytest.raises(HorizonError):
            simulate_paths(kernel_stable(0.5), 1.0, 0.0, small_mc, lam=1.0, horizon=1e6)


@pytest.mark.slow
class TestStepDetection:
    """Exit times read off the step grid against exactly sampled ones."""

    def test_bias_shrinks_with_step(self, small_mc):
        reference = mittag_leffler(0.5, -1.0)
        errors, ses = [], []
        for ds in (0.01, 0.005, 0.0025):
            cfg = replace(
                small_mc, n_paths=1_000_000, ds=ds, block_size=50_000, master_seed=3, workers=4
            )
            batch = simulate_paths(kernel_stable(0.5), 1.0, 0.0, cfg, mode=KILLED, lam=1.0)
            weights = batch.discount(1.0)
            errors.append(abs(weights.mean() - reference))
            ses.append(weights.std(ddof=1) / math.sqrt(weights.size))
        for i in range(2):
            assert errors[i + 1] <= errors[i] + 3.0 * math.hypot(ses[i], ses[i + 1]), errors
        assert errors[2] < errors[0]

    def test_distribution_matches_exact_draws(self, small_mc):
        n = 100_000
        cfg = replace(small_mc, n_paths=n, ds=1e-3, block_size=25_000, master_seed=5)
        batch = simulate_paths(kernel_stable(0.5), 1.0, 0.0, cfg, mode=KILLED, lam=1.0)
        assert batch.exited.all()
        exact = exit_times_stable_exact(0.5, 1.0, 0.0, n, stream(5, 0, NS_EXIT))
        assert stats.ks_2samp(batch.exit_time, exact).statistic < 0.01


class TestSinglePath:
    def test_path_shape(self):
        path = simulate_path(kernel_stable(0.5), 1.0, 0.0, STOPPED, 1e-3, 1.0, None, 50.0,
                             stream(9, 0))
        assert path.exited
        assert path.states[0] == 1.0
        assert path.states[-1] == 0.0
        assert path.exit_time == pytest.approx(path.times[-1])
        assert path.functional == 0.0

    def test_killed_path_drops_final_state(self):
        path = simulate_path(kernel_stable(0.5), 1.0, 0.0, KILLED, 1e-3, 0.0, lambda t: 1.0,
                             50.0, stream(9, 0))
        assert np.all(path.states > 0.0)
        assert path.functional == pytest.approx(path.exit_time)

    def test_thinning_path(self):
        k = kernel_variable_order(lambda t: 0.4 + 0.2 * t, beta_range=(0.4, 0.6))
        path = simulate_path(k, 1.0, 0.0, STOPPED, 1e-3, 1.0, None, 50.0, stream(10, 0))
        assert path.exited
        assert np.all(np.diff(path.states) <= 0.0)


class TestHorizon:
    def test_discount_weights_are_exact(self):
        w = discount_weights(2.0, 0.1, 5)
        expected = [(math.exp(-0.2 * k) - math.exp(-0.2 * (k + 1))) / 2.0 for k in range(5)]
        assert np.allclose(w, expected, rtol=1e-13)
        assert np.array_equal(discount_weights(0.0, 0.1, 3), [0.1, 0.1, 0.1])

    def test_positive_rate(self, small_mc):
        assert resolve_horizon(kernel_stable(0.5), 1.0, 0.0, 2.0, small_mc) == 25.0

    def test_zero_rate_uses_expected_exit(self, small_mc):
        horizon = resolve_horizon(kernel_stable(0.5), 1.0, 0.0, 0.0, small_mc)
        assert horizon == pytest.approx(50.0 * expected_exit_time_stable(0.5, 1.0, 0.0))

    def test_override(self, small_mc):
        cfg = replace(small_mc, horizon_override=3.0)
        assert resolve_horizon(kernel_stable(0.5), 1.0, 0.0, 2.0, cfg) == 3.0


class TestMixedPaths:
    def test_workers_do_not_change_results(self, small_mc):
        k1, k2 = kernel_stable(0.5), kernel_stable(0.7)

        def g(x, y):
            return x + y

        one = simulate_mixed_paths(k1, k2, 1.0, 0.5, small_mc, lam=1.0, g=g, phi=np.sin)
        many = simulate_mixed_paths(
            k1, k2, 1.0, 0.5, replace(small_mc, workers=4), lam=1.0, g=g, phi=np.sin
        )
        assert np.array_equal(one.functional, many.functional)
        assert np.array_equal(one.boundary_term, many.boundary_term)

    def test_boundary_term_only_through_stopped_exit(self, small_mc):
        batch = simulate_mixed_paths(
            kernel_stable(0.5), kernel_stable(0.5), 1.0, 1.0, small_mc, lam=1.0,
            phi=lambda t: 1.0,
        )
        assert np.all(batch.boundary_term[~batch.via_stopped] == 0.0)
        assert np.all(batch.boundary_term[batch.via_stopped] > 0.0)
        assert not np.any(batch.via_stopped & batch.ties)
        assert 0.0 <= batch.tie_fraction < 0.05

    def test_starts_inside_quadrant(self, small_mc):
        with pytest.raises(DomainError):
            simulate_mixed_paths(kernel_stable(0.5), kernel_stable(0.5), 0.0, 1.0, small_mc)
