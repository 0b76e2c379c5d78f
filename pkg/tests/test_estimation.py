"""Tests for intent estimation and belief dynamics."""

import numpy as np
import pytest

from intentgames.estimation import (
    BeliefKind,
    EstimationError,
    EstimatorConfig,
    GaussianBelief,
    PointEstimate,
    belief_gain_schedule,
    contraction_factor,
    contraction_report,
    expected_intent,
    gaussian_update,
    mle_update,
)
from intentgames.lq_nash import FeedbackPolicyStage, PlayerPolicy


def _policy(K_theta, K_x=0.0, k=0.0, n=1):
    K_theta = np.atleast_2d(K_theta)
    m = K_theta.shape[0]
    return PlayerPolicy(K_x=np.full((m, n), K_x), K_theta=K_theta, k=np.full(m, k))


class TestMLEUpdate:
    """Test cases for the point-estimate update."""

    def test_worked_example(self):
        """Test that K_theta = 1, alpha = 0.5 moves the estimate from 0 halfway to 1."""
        policy = _policy([[1.0]])
        x = np.zeros(1)
        u1 = policy.act(x, np.array([1.0]))
        updated = mle_update(PointEstimate(np.zeros(1)), x, u1, policy, 0.5)
        assert updated.theta_hat[0] == pytest.approx(0.5)

    def test_closed_form_contraction(self, rng):
        """Test theta_hat' = theta_hat + alpha K'K (theta - theta_hat) for observed optimal play."""
        K_theta = rng.standard_normal((3, 2))
        policy = _policy(K_theta, K_x=0.3, k=0.1, n=2)
        x = rng.standard_normal(2)
        theta, theta_hat = rng.standard_normal(2), rng.standard_normal(2)
        updated = mle_update(PointEstimate(theta_hat), x, policy.act(x, theta), policy, 0.25)
        expected = theta_hat + 0.25 * K_theta.T @ K_theta @ (theta - theta_hat)
        np.testing.assert_allclose(updated.theta_hat, expected, atol=1e-12)

    def test_zero_step_keeps_estimate(self):
        """Test that alpha = 0 freezes the estimate."""
        policy = _policy([[2.0]])
        updated = mle_update(PointEstimate([3.0]), np.zeros(1), np.array([7.0]), policy, 0.0)
        assert updated.theta_hat[0] == 3.0

    def test_accepts_whole_stage(self):
        """Test that a policy stage is reduced to the certain player's policy."""
        leader, follower = _policy([[1.0]]), _policy([[5.0]])
        stage = FeedbackPolicyStage(players=(leader, follower))
        u1 = leader.act(np.zeros(1), np.array([1.0]))
        updated = mle_update(PointEstimate([0.0]), np.zeros(1), u1, stage, 0.5)
        assert updated.theta_hat[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("alpha", [-0.1, 1.0, 1.5])
    def test_step_size_out_of_range(self, alpha):
        """Test that step sizes outside [0, 1) are rejected."""
        with pytest.raises(EstimationError, match="alpha"):
            mle_update(PointEstimate([0.0]), np.zeros(1), np.zeros(1), _policy([[1.0]]), alpha)

    def test_control_shape_mismatch(self):
        """Test that an observed control of the wrong size is rejected."""
        with pytest.raises(EstimationError, match="shape"):
            mle_update(PointEstimate([0.0]), np.zeros(1), np.zeros(2), _policy([[1.0]]), 0.5)

    def test_non_finite_estimate_rejected(self):
        """Test that a NaN estimate cannot be constructed."""
        with pytest.raises(EstimationError):
            PointEstimate([np.nan])


class TestGaussianUpdate:
    """Test cases for the Gaussian belief update."""

    def test_scalar_kalman_update(self):
        """Test the scalar posterior against the Kalman measurement update."""
        policy = _policy([[2.0]], K_x=0.5, k=-0.1)
        x = np.array([0.4])
        u1 = np.array([-1.3])
        prior = GaussianBelief(mu=[0.2], Sigma=[[0.8]])
        posterior = gaussian_update(prior, x, u1, policy, noise_scale=0.5)
        G = -2.0
        S = 0.5 + G * 0.8 * G
        predicted = policy.act(x, prior.mu)[0]
        assert posterior.mu[0] == pytest.approx(0.2 + 0.8 * G / S * (u1[0] - predicted))
        assert posterior.Sigma[0, 0] == pytest.approx(0.8 - 0.8 * G * G * 0.8 / S)

    @pytest.mark.slow
    def test_matches_grid_posterior(self):
        """Test mean and variance against a 10,000-point grid posterior on 50 instances."""
        rng = np.random.default_rng(11)
        for _ in range(50):
            K_theta = rng.uniform(-2.0, 2.0)
            K_x, k = rng.standard_normal(), rng.standard_normal()
            policy = _policy([[K_theta]], K_x=K_x, k=k)
            mu0, var0 = rng.standard_normal(), rng.uniform(0.1, 2.0)
            noise = rng.uniform(0.1, 2.0)
            x = rng.standard_normal(1)
            theta_true = mu0 + np.sqrt(var0) * rng.standard_normal()
            u1 = policy.act(x, np.array([theta_true])) + np.sqrt(noise) * rng.standard_normal(1)

            grid = np.linspace(mu0 - 10 * np.sqrt(var0), mu0 + 10 * np.sqrt(var0), 10_000)
            predicted = -K_x * x[0] - K_theta * grid - k
            log_post = -0.5 * (grid - mu0) ** 2 / var0 - 0.5 * (u1[0] - predicted) ** 2 / noise
            weights = np.exp(log_post - log_post.max())
            weights /= weights.sum()
            grid_mean = weights @ grid
            grid_var = weights @ (grid - grid_mean) ** 2

            posterior = gaussian_update(GaussianBelief([mu0], [[var0]]), x, u1, policy, noise)
            assert posterior.mu[0] == pytest.approx(grid_mean, abs=1e-3)
            assert posterior.Sigma[0, 0] == pytest.approx(grid_var, abs=1e-3)

    def test_covariance_stays_symmetric_psd(self, rng):
        """Test that repeated updates keep the covariance symmetric positive definite."""
        policy = _policy(rng.standard_normal((2, 3)), n=1)
        belief = GaussianBelief(mu=np.zeros(3), Sigma=np.eye(3))
        for _ in range(20):
            belief = gaussian_update(belief, np.zeros(1), rng.standard_normal(2), policy, 0.01)
        np.testing.assert_allclose(belief.Sigma, belief.Sigma.T)
        assert np.linalg.eigvalsh(belief.Sigma).min() > 0

    def test_singular_innovation_raises(self):
        """Test that an ill-conditioned innovation covariance is reported."""
        policy = _policy([[1e4], [1e4]])
        prior = GaussianBelief(mu=[0.0], Sigma=[[1e4]])
        with pytest.raises(EstimationError, match="singular"):
            gaussian_update(prior, np.zeros(1), np.zeros(2), policy, noise_scale=1e-6)

    def test_expected_intent(self):
        """Test that both belief kinds expose the intent the player acts on."""
        assert expected_intent(PointEstimate([1.5]))[0] == 1.5
        assert expected_intent(GaussianBelief([2.5], [[1.0]]))[0] == 2.5


class TestContraction:
    """Test cases for contraction diagnostics."""

    def test_factor_values(self):
        """Test the factor for unit gains and for a frozen estimator."""
        policies = [_policy([[1.0]]), _policy([[0.5]])]
        assert contraction_factor(policies, 0.5) == pytest.approx(0.875)
        assert contraction_factor(policies, 0.0) == pytest.approx(1.0)

    def test_report(self):
        """Test the report fields and the step bound."""
        report = contraction_report([_policy([[1.0]])], 0.5)
        assert report.contracts
        assert report.min_eigenvalue == pytest.approx(1.0)
        assert report.steps_to_reach(1.0, 1e-3) == 10
        assert report.steps_to_reach(1e-4, 1e-3) == 0

    def test_no_bound_without_contraction(self):
        """Test that alpha = 0 gives no step bound."""
        report = contraction_report([_policy([[1.0]])], 0.0)
        assert not report.contracts
        assert report.steps_to_reach(1.0, 1e-3) is None

    def test_empty_policies(self):
        """Test that an empty horizon is rejected."""
        with pytest.raises(EstimationError):
            contraction_factor([], 0.5)


class TestEstimatorConfig:
    """Test cases for EstimatorConfig and belief gain schedules."""

    def test_from_dict_roundtrip(self):
        """Test that a Gaussian config survives to_dict/from_dict."""
        config = EstimatorConfig.from_dict({
            'kind': 'gaussian', 'noise_scale': 2.0, 'initial_estimate': [0.1],
            'prior_covariance': [[0.4]],
        })
        assert config.kind is BeliefKind.GAUSSIAN
        again = EstimatorConfig.from_dict(config.to_dict())
        np.testing.assert_allclose(again.prior_covariance, [[0.4]])
        assert isinstance(again.initial_belief(), GaussianBelief)

    def test_unknown_kind(self):
        """Test that an unknown belief kind is rejected."""
        with pytest.raises(EstimationError, match="kind"):
            EstimatorConfig.from_dict({'kind': 'particle'})

    def test_point_gains(self):
        """Test that point-estimate gains are alpha G'."""
        stage = FeedbackPolicyStage(players=(_policy([[2.0]]), _policy([[1.0]])))
        schedule = belief_gain_schedule([stage, stage], EstimatorConfig(alpha=0.25))
        assert schedule.covariances is None
        np.testing.assert_allclose(schedule.gains[0], [[-0.5]])

    def test_gaussian_schedule_matches_updates(self):
        """Test that the precomputed covariances match sequential posterior updates."""
        stage = FeedbackPolicyStage(players=(_policy([[1.5]]), _policy([[1.0]])))
        config = EstimatorConfig(kind='gaussian', noise_scale=0.7, initial_estimate=[0.0],
                                 prior_covariance=[[2.0]])
        schedule = belief_gain_schedule([stage] * 3, config)
        belief = config.initial_belief()
        for t in range(3):
            belief = config.update(belief, np.zeros(1), np.array([0.3]), stage)
            np.testing.assert_allclose(belief.Sigma, schedule.covariances[t + 1], rtol=1e-10)
