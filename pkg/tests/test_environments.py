"""Tests for the environment registry and scenario games."""

import numpy as np
import pytest

from intentgames.core_model import (
    finite_difference_gradient,
    finite_difference_jacobian,
    linearize,
    stage_cost_derivatives,
    terminal_cost_derivatives,
)
from intentgames.environments import (
    ENVIRONMENTS,
    CollisionTerm,
    EnvironmentConfigError,
    FurnitureParams,
    RigidityTerm,
    make_environment,
    make_furniture,
    make_platooning,
)
from intentgames.estimation import BeliefKind
from intentgames.simulation import InteractionModel, InteractionPlan, rollout, run_models, regret


FIDELITY_TOL = 1e-4


def _assert_close(ours, reference):
    np.testing.assert_allclose(ours, reference, rtol=FIDELITY_TOL, atol=FIDELITY_TOL)


def _term_check(term, x, theta):
    value, grad, hess = term(x, theta)
    _assert_close(grad, finite_difference_gradient(lambda z: term(z, theta)[0], x))
    _assert_close(hess, finite_difference_jacobian(lambda z: term(z, theta)[1], x))
    return value


class TestRegistry:
    """Test cases for make_environment."""

    @pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
    def test_every_environment_builds(self, name):
        """Test that each registered scenario builds with its defaults."""
        spec = make_environment(name)
        assert spec.name == name
        assert spec.game.dims.num_players >= 2
        assert spec.x0.shape == (spec.game.dims.n,)
        config = spec.default_config()
        assert config['name'] == name and config['intent']

    def test_unknown_environment(self):
        """Test that an unknown name lists the known ones."""
        with pytest.raises(EnvironmentConfigError, match="lunar_lander") as info:
            make_environment("mars_rover")
        assert info.value.key == 'name'

    def test_unknown_parameter_names_key(self):
        """Test that an unknown override is reported with its key."""
        with pytest.raises(EnvironmentConfigError) as info:
            make_environment("furniture", {'gravity': 9.81})
        assert info.value.key == 'gravity'

    @pytest.mark.parametrize("key,value", [('alpha', 1.0), ('T', 0), ('dt', -0.1), ('w_angle', -1.0)])
    def test_invalid_values(self, key, value):
        """Test that out-of-range parameters are rejected with their key."""
        with pytest.raises(EnvironmentConfigError) as info:
            make_environment("furniture", {key: value})
        assert info.value.key == key

    def test_overrides_apply(self):
        """Test that overrides reach the built game."""
        spec = make_environment("scalar_toy", {'T': 3, 'theta_star': 2.0})
        assert spec.game.dims.T == 3
        np.testing.assert_allclose(spec.theta_star, [2.0])

    def test_list_overrides_become_tuples(self):
        """Test that YAML lists are accepted for tuple parameters."""
        spec = make_environment("furniture", {'goal': [1.0, 1.0], 'theta_grid': [0.2]})
        assert spec.params.goal == (1.0, 1.0)
        assert spec.theta_grid == (0.2,)


class TestScenarioDefaults:
    """Test the scenario constants the experiments rely on."""

    def test_furniture(self):
        """Test the table start angle, prior and intent grid."""
        spec = make_furniture()
        assert spec.x0[4] == pytest.approx(0.6)
        assert spec.belief_kind is BeliefKind.GAUSSIAN
        np.testing.assert_allclose(spec.estimator.initial_estimate, [0.1])
        np.testing.assert_allclose(spec.estimator.prior_covariance, [[0.4]])
        assert spec.theta_grid == (0.3, 1.1)

    def test_lunar_lander(self):
        """Test the teaching weights and the intent switch."""
        spec = make_environment("lunar_lander")
        assert (spec.params.rho1, spec.params.rho2) == (1.0, 4.0)
        t_switch, theta = spec.switch
        assert t_switch == 20 and theta[0] == 50.0
        assert spec.game.is_linear

    def test_manipulation(self):
        """Test the estimate start and the ratio sweep."""
        spec = make_environment("manipulation")
        assert spec.params.initial_estimate == 0.0
        assert spec.params.ratios == (0.0, 1.0, 10.0)
        assert spec.switch is None

    def test_platooning(self):
        """Test the grid and player count."""
        spec = make_platooning()
        assert len(spec.theta_grid) == 5
        assert spec.game.dims.num_players == 3

    def test_furniture_rejects_zero_length(self):
        """Test that a table needs a positive length."""
        with pytest.raises(EnvironmentConfigError, match="length"):
            make_furniture(FurnitureParams(length=0.0))


class TestDerivativeFidelity:
    """Analytic Jacobians and Hessians against central differences."""

    @pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
    def test_random_points(self, name):
        """Test dynamics and cost derivatives on 50 random points."""
        spec = make_environment(name)
        game = spec.game.as_nonlinear()
        dims = game.dims
        rng = np.random.default_rng(5)
        for _ in range(50):
            t = int(rng.integers(0, dims.T))
            stage = game.nonlinear_stages[t]
            x = spec.x0 + rng.standard_normal(dims.n)
            us = [rng.standard_normal(m) for m in dims.control_dims]
            theta = spec.theta_star + rng.standard_normal(dims.p)

            linear = linearize(stage, x, us)
            _assert_close(linear.A, finite_difference_jacobian(lambda z: stage.transition(z, us), x))
            for i in range(dims.num_players):
                def along_u(v, i=i):
                    perturbed = list(us)
                    perturbed[i] = v
                    return stage.transition(x, perturbed)
                _assert_close(linear.B[i], finite_difference_jacobian(along_u, us[i]))

            for i in range(dims.num_players):
                derivs = stage_cost_derivatives(stage, i, x, us[i], theta)
                _assert_close(derivs.gx, finite_difference_gradient(
                    lambda z: stage.costs[i](z, us[i], theta), x))
                _assert_close(derivs.gu, finite_difference_gradient(
                    lambda v: stage.costs[i](x, v, theta), us[i]))
                _assert_close(derivs.Hxx, finite_difference_jacobian(
                    lambda z: stage_cost_derivatives(stage, i, z, us[i], theta).gx, x))
                final = terminal_cost_derivatives(game.terminal, i, x, theta)
                _assert_close(final.gx, finite_difference_gradient(
                    lambda z: game.terminal.costs[i](z, theta), x))

    def test_collision_term_inside_radius(self):
        """Test the hinge derivatives where the penalty is active."""
        term = CollisionTerm(10.0, (0, 1), (2, 3), 1.5)
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = np.concatenate([[0.0, 0.0], rng.uniform(-0.7, 0.7, size=2)])
            if np.linalg.norm(x[2:]) < 0.05:
                continue
            assert _term_check(term, x, np.zeros(1)) > 0.0

    def test_collision_term_outside_radius(self):
        """Test that separated vehicles pay nothing."""
        value, grad, hess = CollisionTerm(10.0, (0, 1), (2, 3), 1.5)(np.array([0.0, 0.0, 3.0, 0.0]),
                                                                     np.zeros(1))
        assert value == 0.0 and not grad.any() and not hess.any()

    def test_rigidity_term(self):
        """Test the rigid-table penalty away from the rigid configuration."""
        term = RigidityTerm(10.0, (0, 1), (2, 3), 4, 1.0)
        rng = np.random.default_rng(9)
        for _ in range(20):
            _term_check(term, rng.standard_normal(5), np.zeros(1))


class TestScenarios:
    """Scenario-level comparisons of teaching and passive play."""

    @pytest.mark.slow
    def test_platooning_regret(self):
        """Test that teaching never raises the lead vehicle's regret across the lane grid."""
        spec = make_platooning()
        for theta in spec.theta_grid:
            theta_star = np.array([theta])
            plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
            records = run_models(
                plan,
                [InteractionModel.active(1, 0), InteractionModel.passive(),
                 InteractionModel.complete_info()],
                theta_star, spec.initial_state(),
            )
            reference = records["complete_info"]
            active = regret(records["active-r1-0"], reference, 0)
            passive = regret(records["passive"], reference, 0)
            assert active <= passive + 1e-9 * max(1.0, abs(passive))

    @pytest.mark.slow
    def test_platooning_follower_beliefs_agree(self):
        """Test that the two followers hold the same belief when the lead keeps the center lane."""
        spec = make_platooning()
        theta_star = np.array([0.0])
        plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
        records = run_models(plan, [InteractionModel.active(1, 0), InteractionModel.passive()],
                             theta_star, spec.initial_state())
        for record in records.values():
            np.testing.assert_allclose(record.belief_means[0], record.belief_means[1], atol=1e-9)

    @pytest.mark.slow
    @pytest.mark.parametrize("theta", [0.3, 1.1])
    def test_furniture_task_cost(self, theta):
        """Test that the human pays less and ends nearer its preferred angle than under passive play."""
        spec = make_furniture()
        theta_star = np.array([theta])
        plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
        initial = spec.initial_state()
        active = rollout(plan, InteractionModel.active(1, 0), theta_star, initial)
        passive = rollout(plan, InteractionModel.passive(), theta_star, initial)
        assert active.task_cost(0) < passive.task_cost(0)
        assert abs(active.states[-1, 4] - theta) < abs(passive.states[-1, 4] - theta)
