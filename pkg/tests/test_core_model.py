"""Tests for the game model and its local approximations."""

import numpy as np
import pytest

from intentgames.core_model import (
    CostDerivatives,
    DimensionError,
    GameDefinition,
    GameDimensions,
    GameModelError,
    LinearStage,
    NonlinearStage,
    QuadraticCostStage,
    TerminalCost,
    evaluate_trajectory_cost,
    finite_difference_jacobian,
    linearize,
    quadraticize,
    quadraticize_terminal,
    rollout_open_loop,
)

from .conftest import random_lq_game, scalar_game


def _pendulum_stage(with_derivatives: bool) -> NonlinearStage:
    dt = 0.1

    def f(x, us):
        return np.array([x[0] + dt * x[1], x[1] + dt * (np.sin(x[0]) + us[0][0] * us[1][0])])

    def jac(x, us):
        A = np.array([[1.0, dt], [dt * np.cos(x[0]), 1.0]])
        return A, [np.array([[0.0], [dt * us[1][0]]]), np.array([[0.0], [dt * us[0][0]]])]

    def leader(x, u, theta):
        return (x[0] - theta[0]) ** 4 + np.cos(x[1]) + u @ u + u[0] ** 4

    def follower(x, u, theta):
        return x @ x + 2.0 * u @ u

    return NonlinearStage(transition=f, costs=(leader, follower),
                          jacobian=jac if with_derivatives else None)


class TestGameDefinition:
    """Test cases for game construction and evaluation."""

    def test_dimensions_need_two_players(self):
        """Test that a single-player game is rejected."""
        with pytest.raises(GameModelError):
            GameDimensions(n=2, control_dims=(1,), p=1, T=3)

    def test_input_matrix_shape_checked(self):
        """Test that a wrongly shaped B raises DimensionError naming the stage."""
        dims = GameDimensions(n=2, control_dims=(1, 1), p=1, T=1)
        stage = LinearStage(A=np.eye(2), B=(np.ones((2, 1)), np.ones((3, 1))))
        cost = QuadraticCostStage(Q=np.eye(2), R=np.eye(1))
        final = QuadraticCostStage(Q=np.eye(2))
        with pytest.raises(DimensionError, match="stage 0"):
            GameDefinition(dims=dims, intent_lower=-1, intent_upper=1, linear_stages=(stage,),
                           cost_stages=((cost, cost), (final, final)))

    def test_asymmetric_q_rejected(self):
        """Test that a non-symmetric Q raises GameModelError."""
        dims = GameDimensions(n=2, control_dims=(1, 1), p=1, T=1)
        stage = LinearStage(A=np.eye(2), B=(np.ones((2, 1)), np.ones((2, 1))))
        bad = QuadraticCostStage(Q=np.array([[1.0, 0.5], [0.0, 1.0]]), R=np.eye(1))
        good = QuadraticCostStage(Q=np.eye(2), R=np.eye(1))
        final = QuadraticCostStage(Q=np.eye(2))
        with pytest.raises(GameModelError, match="symmetric"):
            GameDefinition(dims=dims, intent_lower=-1, intent_upper=1, linear_stages=(stage,),
                           cost_stages=((bad, good), (final, final)))

    def test_indefinite_r_rejected(self):
        """Test that a control cost that is not positive definite is rejected."""
        dims = GameDimensions(n=1, control_dims=(1, 1), p=1, T=1)
        stage = LinearStage(A=np.eye(1), B=(np.eye(1), np.eye(1)))
        good = QuadraticCostStage(Q=np.eye(1), R=np.eye(1))
        bad = QuadraticCostStage(Q=np.eye(1), R=np.zeros((1, 1)))
        final = QuadraticCostStage(Q=np.eye(1))
        with pytest.raises(GameModelError, match="positive definite"):
            GameDefinition(dims=dims, intent_lower=-1, intent_upper=1, linear_stages=(stage,),
                           cost_stages=((good, bad), (final, final)))

    def test_uncertain_player_cost_cannot_depend_on_intent(self):
        """Test that an intent term in an uncertain player's cost is rejected."""
        dims = GameDimensions(n=1, control_dims=(1, 1), p=1, T=1)
        stage = LinearStage(A=np.eye(1), B=(np.eye(1), np.eye(1)))
        leader = QuadraticCostStage(Q=np.eye(1), R=np.eye(1), L_theta=np.ones((1, 1)))
        follower = QuadraticCostStage(Q=np.eye(1), R=np.eye(1), L_theta=np.ones((1, 1)))
        final = QuadraticCostStage(Q=np.eye(1))
        with pytest.raises(GameModelError, match="intent"):
            GameDefinition(dims=dims, intent_lower=-1, intent_upper=1, linear_stages=(stage,),
                           cost_stages=((leader, follower), (final, final)))

    def test_wrong_number_of_cost_stages(self):
        """Test that a missing terminal stage is reported."""
        dims = GameDimensions(n=1, control_dims=(1, 1), p=1, T=1)
        stage = LinearStage(A=np.eye(1), B=(np.eye(1), np.eye(1)))
        cost = QuadraticCostStage(Q=np.eye(1), R=np.eye(1))
        with pytest.raises(GameModelError, match="terminal"):
            GameDefinition(dims=dims, intent_lower=-1, intent_upper=1, linear_stages=(stage,),
                           cost_stages=((cost, cost),))

    def test_clip_intent(self):
        """Test that intents are clipped to the admissible box."""
        game = scalar_game()
        assert game.clip_intent(np.array([25.0]))[0] == 10.0
        assert game.clip_intent(np.array([-3.0]))[0] == -3.0

    def test_as_nonlinear_matches_linear_evaluation(self, rng):
        """Test that the nonlinear wrapper reproduces transitions and costs."""
        game = random_lq_game(rng, n=3, control_dims=(1, 2), T=3)
        wrapped = game.as_nonlinear()
        assert not wrapped.is_linear
        x = rng.standard_normal(3)
        us = [rng.standard_normal(1), rng.standard_normal(2)]
        theta = np.array([0.7])
        for t in range(3):
            np.testing.assert_allclose(wrapped.transition(t, x, us), game.transition(t, x, us))
            for i in range(2):
                assert wrapped.stage_cost(t, i, x, us[i], theta) == pytest.approx(
                    game.stage_cost(t, i, x, us[i], theta))
        assert wrapped.terminal_cost(0, x, theta) == pytest.approx(game.terminal_cost(0, x, theta))


class TestTrajectoryCost:
    """Test cases for evaluate_trajectory_cost."""

    def test_unit_example(self):
        """Test that x = [1, 1], u = [1] with unit weights costs 3."""
        game = scalar_game(T=1, track_intent=False)
        states = np.array([[1.0], [1.0]])
        controls = [np.array([[1.0]]), np.array([[0.0]])]
        assert evaluate_trajectory_cost(game, states, controls, 0, np.zeros(1)) == pytest.approx(3.0)

    def test_intent_term_enters_linearly(self):
        """Test that the cost changes by L_theta' x per unit of intent."""
        game = scalar_game(T=1)
        states = np.array([[2.0], [1.0]])
        controls = [np.array([[0.0]]), np.array([[0.0]])]
        base = evaluate_trajectory_cost(game, states, controls, 0, np.zeros(1))
        shifted = evaluate_trajectory_cost(game, states, controls, 0, np.ones(1))
        assert shifted - base == pytest.approx(-2.0 * (2.0 + 1.0))

    def test_wrong_state_shape_names_stage(self):
        """Test that a short trajectory raises DimensionError."""
        game = scalar_game(T=2)
        with pytest.raises(DimensionError, match="stage"):
            evaluate_trajectory_cost(game, np.zeros((2, 1)), [np.zeros((2, 1))] * 2, 0, np.zeros(1))

    def test_rollout_open_loop(self):
        """Test open-loop propagation of the scalar integrator."""
        game = scalar_game(T=3)
        states = rollout_open_loop(game, np.zeros(1), [np.ones((3, 1)), 2.0 * np.ones((3, 1))])
        np.testing.assert_allclose(states[:, 0], [0.0, 3.0, 6.0, 9.0])


class TestLinearize:
    """Test cases for linearize."""

    def test_linear_stage_is_exact(self, rng):
        """Test that an affine transition linearizes to itself."""
        game = random_lq_game(rng, n=3, control_dims=(2, 1), T=1)
        stage = game.as_nonlinear().nonlinear_stages[0]
        lin = linearize(stage, rng.standard_normal(3), [rng.standard_normal(2), rng.standard_normal(1)])
        original = game.linear_stages[0]
        np.testing.assert_allclose(lin.A, original.A, atol=1e-12)
        np.testing.assert_allclose(lin.d, original.d, atol=1e-12)
        for B, B0 in zip(lin.B, original.B):
            np.testing.assert_allclose(B, B0, atol=1e-12)

    def test_finite_differences_match_analytic_jacobian(self, rng):
        """Test that the finite-difference path agrees with the analytic Jacobian."""
        x = rng.standard_normal(2)
        us = [rng.standard_normal(1), rng.standard_normal(1)]
        analytic = linearize(_pendulum_stage(True), x, us)
        numeric = linearize(_pendulum_stage(False), x, us)
        np.testing.assert_allclose(numeric.A, analytic.A, atol=1e-6)
        for B, B0 in zip(numeric.B, analytic.B):
            np.testing.assert_allclose(B, B0, atol=1e-6)
        np.testing.assert_allclose(numeric.d, analytic.d, atol=1e-6)

    def test_linearization_reproduces_point(self, rng):
        """Test that the affine model is exact at the expansion point."""
        stage = _pendulum_stage(True)
        x = rng.standard_normal(2)
        us = [rng.standard_normal(1), rng.standard_normal(1)]
        np.testing.assert_allclose(linearize(stage, x, us).step(x, us), stage.transition(x, us))

    def test_non_finite_derivative_raises(self):
        """Test that an infinite Jacobian entry is reported with its coordinate."""
        def jac(x, us):
            return np.array([[np.inf]]), [np.eye(1), np.eye(1)]

        stage = NonlinearStage(transition=lambda x, us: x + us[0] + us[1],
                               costs=(lambda x, u, th: 0.0,) * 2, jacobian=jac)
        with pytest.raises(GameModelError, match=r"\(0, 0\)"):
            linearize(stage, np.zeros(1), [np.zeros(1), np.zeros(1)])


class TestQuadraticize:
    """Test cases for quadraticize and quadraticize_terminal."""

    def test_quadratic_cost_maps_to_itself(self, rng):
        """Test that quadraticizing a quadratic cost at any point recovers it."""
        game = random_lq_game(rng, n=2, control_dims=(1, 1), T=1)
        stage = game.as_nonlinear().nonlinear_stages[0]
        x = 5.0 * rng.standard_normal(2)
        us = [rng.standard_normal(1), rng.standard_normal(1)]
        for approx, exact in zip(quadraticize(stage, x, us, np.array([0.3])), game.cost_stages[0]):
            np.testing.assert_allclose(approx.Q, exact.Q, atol=1e-9)
            np.testing.assert_allclose(approx.R, exact.R, atol=1e-9)
            np.testing.assert_allclose(approx.r, exact.r, atol=1e-8)
            np.testing.assert_allclose(approx.ell0, exact.ell0, atol=1e-6)
            np.testing.assert_allclose(approx.intent_matrix(1), exact.intent_matrix(1), atol=1e-6)

    def test_value_and_gradient_match_at_point(self, rng):
        """Test that the local quadratic matches value differences and gradient of a quartic."""
        stage = _pendulum_stage(False)
        x = np.array([0.3, -0.2])
        us = [np.array([0.4]), np.array([0.1])]
        theta = np.array([0.5])
        approx = quadraticize(stage, x, us, theta)[0]
        cost = stage.costs[0]

        def grad(z):
            return finite_difference_jacobian(lambda w: np.atleast_1d(cost(w, us[0], theta)), z)[0]

        local_grad = 2.0 * approx.Q @ x + approx.linear_term(theta)
        np.testing.assert_allclose(local_grad, grad(x), atol=1e-4)
        assert np.all(np.linalg.eigvalsh(approx.Q) > 0)

    def test_hessian_is_floored(self):
        """Test that a concave state cost still yields a positive definite Q."""
        stage = NonlinearStage(
            transition=lambda x, us: x,
            costs=(lambda x, u, th: -(x @ x) + u @ u, lambda x, u, th: u @ u),
        )
        Q = quadraticize(stage, np.zeros(2), [np.zeros(1), np.zeros(1)], np.zeros(1))[0].Q
        assert np.linalg.eigvalsh(Q).min() > 0

    def test_non_finite_hessian_raises(self):
        """Test that a NaN Hessian raises GameModelError."""
        def derivs(x, u, theta):
            return CostDerivatives(gx=np.zeros(1), Hxx=np.array([[np.nan]]), gu=np.zeros(1),
                                   Huu=np.eye(1))

        stage = NonlinearStage(transition=lambda x, us: x, costs=(lambda x, u, th: 0.0,) * 2,
                               cost_derivatives=(derivs, derivs))
        with pytest.raises(GameModelError, match="non-finite"):
            quadraticize(stage, np.zeros(1), [np.zeros(1), np.zeros(1)], np.zeros(1))

    def test_terminal_quadraticization(self):
        """Test the terminal expansion of an intent-tracking cost."""
        terminal = TerminalCost(costs=(lambda x, th: 3.0 * (x[0] - th[0]) ** 2, lambda x, th: x @ x))
        leader, follower = quadraticize_terminal(terminal, np.array([1.0]), np.array([2.0]))
        assert leader.is_terminal
        assert leader.Q[0, 0] == pytest.approx(3.0, abs=1e-4)
        assert leader.intent_matrix(1)[0, 0] == pytest.approx(-6.0, abs=1e-4)
        assert leader.ell0[0] == pytest.approx(0.0, abs=1e-4)
        assert follower.Q[0, 0] == pytest.approx(1.0, abs=1e-4)
