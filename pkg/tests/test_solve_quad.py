"""Tests for the density-quadrature and closed-form engines."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import gamma

from fracflow.engines.solve_quad import (
    RL_RL,
    caputo_solution,
    laplace_exit_mixed_quad,
    laplace_exit_quad,
    m_operator_quad,
    resolvent_factor,
    solve_caputo_closed_form,
    solve_caputo_quad,
    solve_mixed_quad,
    solve_rl_quad,
)
from fracflow.errors import DomainError
from fracflow.special_fn import mittag_leffler, mittag_leffler2, stable_law

E_HALF_MINUS_ONE = 0.42758357615580705


def step(x):
    return 1.0 if x >= 0.5 else 0.0


class TestLaplaceExit:
    def test_half_order_value(self):
        assert laplace_exit_quad(0.5, 1.0, 1.0, 0.0) == pytest.approx(E_HALF_MINUS_ONE, abs=1e-6)

    def test_forms_agree(self):
        density = laplace_exit_quad(0.7, 2.0, 1.3, 0.3, form="density")
        parts = laplace_exit_quad(0.7, 2.0, 1.3, 0.3, form="parts")
        assert density == pytest.approx(parts, abs=1e-6)
        assert density == pytest.approx(mittag_leffler(0.7, -2.0), abs=1e-6)

    def test_trivial_cases(self):
        assert laplace_exit_quad(0.5, 1.0, 0.4, 0.4) == 1.0
        assert laplace_exit_quad(0.5, 0.0, 1.0, 0.0, form="parts") == 1.0

    def test_bad_form(self):
        with pytest.raises(DomainError):
            laplace_exit_quad(0.5, 1.0, 1.0, 0.0, form="series")


class TestMOperator:
    """Tests for M g, the discounted occupation integral of the killed process."""

    def test_resolvent_factor(self):
        law = stable_law(0.6)
        assert resolvent_factor(law, 0.0) == pytest.approx(1.0 / gamma(0.6), rel=1e-6)
        assert resolvent_factor(law, 1.5) == pytest.approx(
            mittag_leffler2(0.6, 0.6, -1.5), abs=1e-6
        )

    def test_m_of_one_without_discount(self):
        # M1(t) = (t-a)^β / Γ(1+β) = E[τ]
        for beta in (0.3, 0.5, 0.8):
            value = m_operator_quad(beta, 0.0, lambda t: 1.0, 0.2, 1.2)
            assert value == pytest.approx(1.0 / gamma(1.0 + beta), rel=1e-6)

    def test_m_of_one_with_discount(self):
        # λ·M1 = 1 - E[e^(-λτ)]
        value = m_operator_quad(0.5, 1.0, lambda t: 1.0, 0.0, 1.0)
        assert value == pytest.approx(1.0 - E_HALF_MINUS_ONE, abs=1e-6)

    def test_zero_source(self):
        assert m_operator_quad(0.5, 1.0, None, 0.0, 1.0) == 0.0
        assert m_operator_quad(0.5, 1.0, np.sin, 0.3, 0.3) == 0.0

    def test_rejects_bad_arguments(self):
        with pytest.raises(DomainError):
            m_operator_quad(1.0, 1.0, np.sin, 0.0, 1.0)
        with pytest.raises(DomainError):
            m_operator_quad(0.5, -1.0, np.sin, 0.0, 1.0)
        with pytest.raises(DomainError):
            m_operator_quad(0.5, 1.0, np.sin, 1.0, 0.5)


class TestCaputo:
    def test_homogeneous_closed_form(self):
        curve = solve_caputo_closed_form(0.5, 1.0, None, 1.0, 0.0, [0.0, 1.0])
        assert curve.values[0] == 1.0
        assert curve.values[1] == pytest.approx(0.4275836, abs=1e-7)
        assert curve.method == "closed_form"

    def test_quadrature_matches_closed_form(self):
        grid = [0.0, 0.25, 0.6, 1.0]
        quad = solve_caputo_quad(0.5, 1.0, np.sin, 1.0, 0.0, grid)
        closed = solve_caputo_closed_form(0.5, 1.0, np.sin, 1.0, 0.0, grid)
        assert np.allclose(quad.values, closed.values, atol=1e-5)
        assert quad.values[0] == 1.0

    def test_discontinuous_source(self):
        grid = [0.3, 0.5, 0.75, 1.0]
        quad = solve_caputo_quad(0.4, 0.5, step, 0.0, 0.0, grid, breaks=[0.5])
        closed = solve_caputo_closed_form(0.4, 0.5, step, 0.0, 0.0, grid, breaks=[0.5])
        assert np.allclose(quad.values, closed.values, atol=1e-5)
        assert quad.values[0] == 0.0
        assert quad.values[1] == 0.0

    def test_rl_caputo_bridge(self):
        # u - u_a solves the RL problem with source g - λu_a
        beta, lam, u_a = 0.6, 1.5, 2.0
        u = caputo_solution(beta, lam, np.cos, u_a, 0.0)
        w = solve_rl_quad(beta, lam, lambda t: np.cos(t) - lam * u_a, 0.0, [0.4, 0.9])
        for t, value in zip(w.points, w.values):
            assert u(t) - u_a == pytest.approx(value, abs=1e-8)

    def test_constant_solution(self):
        # u ≡ c solves D*u + λu = λc
        curve = solve_caputo_quad(0.5, 2.0, lambda t: 6.0, 3.0, 0.0, [0.3, 0.8])
        assert np.allclose(curve.values, 3.0, atol=1e-7)

    def test_boundary_term_is_exit_law(self):
        # u_a·E[e^(-λτ)] with no source
        curve = solve_caputo_quad(0.6, 1.5, None, 2.0, 0.0, [0.7])
        assert curve.values[0] == 2.0 * laplace_exit_quad(0.6, 1.5, 0.7, 0.0)

    def test_boundary_term_follows_exit_law_engine(self, monkeypatch):
        from fracflow.engines import solve_quad

        monkeypatch.setattr(solve_quad, "laplace_exit_quad", lambda *args: 123.0)
        curve = solve_caputo_quad(0.5, 1.0, np.sin, 1.0, 0.0, [0.5])
        source_only = solve_rl_quad(0.5, 1.0, np.sin, 0.0, [0.5]).values[0]
        assert curve.values[0] == pytest.approx(123.0 + source_only)

    def test_order_near_one_tracks_exponential(self):
        grid = [0.1 * k for k in range(1, 11)]
        curve = solve_caputo_closed_form(0.999, 1.0, None, 1.0, 0.0, grid)
        assert np.allclose(curve.values, np.exp(-np.array(grid)), atol=2e-3)

    def test_negative_lambda_closed_form(self):
        curve = solve_caputo_closed_form(0.5, -1.0, None, 1.0, 0.0, [1.0])
        assert curve.values[0] == pytest.approx(mittag_leffler(0.5, 1.0))

    def test_grid_below_a(self):
        with pytest.raises(DomainError):
            solve_caputo_quad(0.5, 1.0, None, 1.0, 0.5, [0.2])
        with pytest.raises(DomainError):
            solve_caputo_closed_form(0.5, 1.0, None, 1.0, 0.5, [0.2])


class TestRL:
    def test_zero_source_gives_zero(self):
        curve = solve_rl_quad(0.5, 1.0, None, 0.0, [0.0, 0.5, 1.0])
        assert curve.values == [0.0, 0.0, 0.0]

    def test_power_source_without_discount(self):
        # With λ = 0 and g ≡ 1 the solution is E[τ].
        curve = solve_rl_quad(0.5, 0.0, lambda t: 1.0, 0.0, [0.25, 1.0])
        expected = [t**0.5 / gamma(1.5) for t in curve.points]
        assert np.allclose(curve.values, expected, rtol=1e-6)


class TestMixed:
    def test_boundary_rows(self):
        curve = solve_mixed_quad(
            0.5, 0.7, 1.0, None, lambda t: t * (1 - t), [(0.0, 0.7), (0.4, 0.0)]
        )
        assert curve.values == [0.0, pytest.approx(0.24)]
        assert curve.two_dimensional

    def test_constant_source_matches_exit_law(self):
        # rl_rl with g ≡ 1: u = (1 - E[e^(-λτ)]) / λ, τ = min(τ1, τ2)
        curve = solve_mixed_quad(
            0.5, 0.7, 1.0, lambda x, y: 1.0, None, [(0.8, 0.6)], variant=RL_RL
        )
        laplace = laplace_exit_mixed_quad(0.5, 0.7, 1.0, 0.8, 0.6)
        assert curve.values[0] == pytest.approx(1.0 - laplace, abs=1e-5)

    def test_mixed_exit_law_mass(self):
        assert laplace_exit_mixed_quad(0.4, 0.6, 0.0, 1.0, 0.5) == pytest.approx(1.0, abs=1e-6)
        assert laplace_exit_mixed_quad(0.4, 0.6, 1.0, 0.0, 0.5) == 1.0

    def test_mixed_exit_law_bounded_by_marginals(self):
        joint = laplace_exit_mixed_quad(0.5, 0.5, 1.0, 1.0, 1.0)
        single = mittag_leffler(0.5, -1.0)
        # min(τ1, τ2) <= τ1
        assert single < joint < 1.0

    def test_rl_rl_drops_boundary_data(self):
        curve = solve_mixed_quad(
            0.5, 0.5, 1.0, None, lambda t: math.sin(math.pi * t), [(0.5, 0.5)], variant=RL_RL
        )
        assert curve.values == [0.0]

    def test_phi_must_vanish_at_zero(self):
        with pytest.raises(DomainError):
            solve_mixed_quad(0.5, 0.5, 1.0, None, lambda t: 1.0, [(0.5, 0.5)])

    def test_bad_variant(self):
        with pytest.raises(DomainError):
            solve_mixed_quad(0.5, 0.5, 1.0, None, None, [(0.5, 0.5)], variant="caputo_caputo")
