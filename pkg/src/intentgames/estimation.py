"""Estimate dynamics of the uncertain players.

Two update rules are supported: a gradient step on the squared action residual
(point estimates) and the closed-form Gaussian posterior under the observation
model u1 ~ N(pi1(x; theta), noise_scale * I). Both are written with the policy
Jacobian G = d pi1 / d theta = -K_theta.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .core_model import CERTAIN_PLAYER
from .lq_nash import FeedbackPolicyStage, PlayerPolicy


logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 1e-12
INNOVATION_CONDITION_LIMIT = 1e12


class EstimationError(Exception):
    """Exception raised for invalid belief updates or estimator settings."""
    pass


class BeliefKind(Enum):
    POINT = "point"
    GAUSSIAN = "gaussian"


def _vector(value) -> np.ndarray:
    array = np.atleast_1d(np.array(value, dtype=float))
    array.setflags(write=False)
    return array


def _covariance(value) -> np.ndarray:
    """Symmetrize and floor the eigenvalues of a covariance."""
    Sigma = np.atleast_2d(np.array(value, dtype=float))
    Sigma = 0.5 * (Sigma + Sigma.T)
    eigenvalues, vectors = np.linalg.eigh(Sigma)
    if eigenvalues.min() < COVARIANCE_FLOOR:
        Sigma = (vectors * np.maximum(eigenvalues, COVARIANCE_FLOOR)) @ vectors.T
        Sigma = 0.5 * (Sigma + Sigma.T)
    Sigma.setflags(write=False)
    return Sigma


@dataclass(frozen=True)
class PointEstimate:
    theta_hat: np.ndarray

    def __post_init__(self):
        theta_hat = _vector(self.theta_hat)
        if not np.all(np.isfinite(theta_hat)):
            raise EstimationError(f"point estimate is not finite: {theta_hat}")
        object.__setattr__(self, 'theta_hat', theta_hat)


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian belief N(mu, Sigma) over the intent."""
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = _vector(self.mu)
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(self.Sigma)):
            raise EstimationError("Gaussian belief has non-finite entries")
        Sigma = _covariance(self.Sigma)
        if Sigma.shape != (mu.size, mu.size):
            raise EstimationError(f"covariance shape {Sigma.shape} does not match mean size {mu.size}")
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'Sigma', Sigma)


BeliefState = Union[PointEstimate, GaussianBelief]


def _certain_policy(policy: Union[PlayerPolicy, FeedbackPolicyStage]) -> PlayerPolicy:
    if isinstance(policy, FeedbackPolicyStage):
        return policy[CERTAIN_PLAYER]
    return policy


def _check_step_size(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise EstimationError(f"step size alpha must lie in [0, 1), got {alpha}")
    return alpha


def _innovation(policy: PlayerPolicy, x: np.ndarray, u1: np.ndarray,
                theta: np.ndarray) -> np.ndarray:
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    m = policy.K_x.shape[0]
    if u1.shape != (m,):
        raise EstimationError(f"observed control has shape {u1.shape}, expected ({m},)")
    x = np.asarray(x, dtype=float)
    if x.shape != (policy.K_x.shape[1],):
        raise EstimationError(f"state has shape {x.shape}, expected ({policy.K_x.shape[1]},)")
    if theta.shape != (policy.K_theta.shape[1],):
        raise EstimationError(
            f"estimate has shape {theta.shape}, expected ({policy.K_theta.shape[1]},)"
        )
    return u1 - policy.act(x, theta)


def mle_update(est: PointEstimate, x: np.ndarray, u1: np.ndarray,
               policy: Union[PlayerPolicy, FeedbackPolicyStage], alpha: float) -> PointEstimate:
    """One gradient step of the maximum-likelihood estimate.

    Computes theta_hat + alpha * G^T (u1 - pi1(x; theta_hat)) with G = -K_theta.
    The factor 2 of the squared-residual gradient is absorbed into ``alpha``.

    Args:
        est: Current estimate.
        x: State at which the certain player acted.
        u1: Observed control of the certain player.
        policy: Certain player's policy at this stage (or the whole stage).
        alpha: Step size in [0, 1).

    Returns:
        Updated estimate (not clipped).

    Raises:
        EstimationError: On shape mismatch or an invalid step size.
    """
    alpha = _check_step_size(alpha)
    policy = _certain_policy(policy)
    residual = _innovation(policy, x, u1, est.theta_hat)
    return PointEstimate(theta_hat=est.theta_hat + alpha * policy.theta_jacobian.T @ residual)


def gaussian_update(belief: GaussianBelief, x: np.ndarray, u1: np.ndarray,
                    policy: Union[PlayerPolicy, FeedbackPolicyStage],
                    noise_scale: float = 1.0) -> GaussianBelief:
    """Bayesian posterior of a Gaussian belief after observing ``u1``.

    The observation model is linear in the intent with map G = -K_theta and
    covariance ``noise_scale * I``, so the posterior is a Kalman measurement
    update.

    Raises:
        EstimationError: If the innovation covariance is singular.
    """
    policy = _certain_policy(policy)
    if noise_scale <= 0:
        raise EstimationError(f"observation noise scale must be positive, got {noise_scale}")
    residual = _innovation(policy, x, u1, belief.mu)
    G = policy.theta_jacobian
    Sigma = belief.Sigma
    S = noise_scale * np.eye(G.shape[0]) + G @ Sigma @ G.T
    condition = np.linalg.cond(S)
    if not np.isfinite(condition) or condition > INNOVATION_CONDITION_LIMIT:
        raise EstimationError(f"innovation covariance is singular (condition number {condition:.3g})")
    gain = linalg.solve(S, G @ Sigma, assume_a='pos').T
    return GaussianBelief(mu=belief.mu + gain @ residual, Sigma=Sigma - gain @ G @ Sigma)


def expected_intent(belief: BeliefState) -> np.ndarray:
    """Intent an uncertain player acts on: the mean (or the point estimate)."""
    if isinstance(belief, GaussianBelief):
        return np.asarray(belief.mu)
    return np.asarray(belief.theta_hat)


@dataclass(frozen=True)
class ContractionReport:
    """Contraction diagnostics of the point-estimate dynamics.

    Attributes:
        alpha: Step size the report was computed for.
        factor: max_t of the largest singular value of I - alpha K_theta^T K_theta.
        min_eigenvalue: min_t of the smallest eigenvalue of K_theta^T K_theta.
        singular_values: Per-stage largest singular values.
    """
    alpha: float
    factor: float
    min_eigenvalue: float
    singular_values: np.ndarray

    @property
    def contracts(self) -> bool:
        return self.factor < 1.0 and self.min_eigenvalue > 0.0

    def steps_to_reach(self, initial_error: float, target: float) -> Optional[int]:
        """Steps after which factor**k * initial_error < target, or None if it never contracts."""
        if initial_error <= target:
            return 0
        if not self.factor < 1.0:
            return None
        if self.factor <= 0.0:
            return 1
        return int(np.ceil(np.log(target / initial_error) / np.log(self.factor)))


def _theta_gains(policies: Sequence[Union[PlayerPolicy, FeedbackPolicyStage]]) -> List[np.ndarray]:
    if len(policies) == 0:
        raise EstimationError("contraction factor needs at least one policy stage")
    return [np.asarray(_certain_policy(stage).K_theta) for stage in policies]


def contraction_report(policies: Sequence[Union[PlayerPolicy, FeedbackPolicyStage]],
                       alpha: float) -> ContractionReport:
    alpha = _check_step_size(alpha)
    values, eigenvalues = [], []
    for K_theta in _theta_gains(policies):
        information = K_theta.T @ K_theta
        identity = np.eye(information.shape[0])
        values.append(float(np.linalg.norm(identity - alpha * information, ord=2)))
        eigenvalues.append(float(np.linalg.eigvalsh(information).min()))
    report = ContractionReport(
        alpha=alpha,
        factor=max(values),
        min_eigenvalue=min(eigenvalues),
        singular_values=np.array(values),
    )
    logger.debug(f"Contraction factor {report.factor:.6f} (min eigenvalue {report.min_eigenvalue:.3e})")
    return report


def contraction_factor(policies: Sequence[Union[PlayerPolicy, FeedbackPolicyStage]],
                       alpha: float) -> float:
    """Largest per-stage singular value of I - alpha K_theta^T K_theta."""
    return contraction_report(policies, alpha).factor


@dataclass
class EstimatorConfig:
    """How uncertain players form and update their beliefs.

    Attributes:
        kind: Point estimates with gradient updates, or Gaussian beliefs.
        alpha: Step size of the point-estimate update.
        noise_scale: Observation-noise variance multiplier of the Gaussian update.
        initial_estimate: theta_hat_0 (point) or mu_0 (Gaussian).
        prior_covariance: Sigma_0 of the Gaussian belief.
    """
    kind: BeliefKind = BeliefKind.POINT
    alpha: float = 0.5
    noise_scale: float = 1.0
    initial_estimate: np.ndarray = field(default_factory=lambda: np.zeros(1))
    prior_covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = BeliefKind(self.kind)
            except ValueError:
                raise EstimationError(f"unknown belief kind: {self.kind}")
        _check_step_size(self.alpha)
        if self.noise_scale <= 0:
            raise EstimationError(f"observation noise scale must be positive, got {self.noise_scale}")
        self.initial_estimate = np.atleast_1d(np.asarray(self.initial_estimate, dtype=float))
        if self.kind is BeliefKind.GAUSSIAN:
            if self.prior_covariance is None:
                self.prior_covariance = np.eye(self.initial_estimate.size)
            self.prior_covariance = np.atleast_2d(np.asarray(self.prior_covariance, dtype=float))
            if self.prior_covariance.shape != (self.initial_estimate.size,) * 2:
                raise EstimationError(
                    f"prior covariance shape {self.prior_covariance.shape} does not match "
                    f"intent dimension {self.initial_estimate.size}"
                )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EstimatorConfig':
        return cls(
            kind=data.get('kind', 'point'),
            alpha=data.get('alpha', 0.5),
            noise_scale=data.get('noise_scale', 1.0),
            initial_estimate=data.get('initial_estimate', [0.0]),
            prior_covariance=data.get('prior_covariance'),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'kind': self.kind.value,
            'alpha': float(self.alpha),
            'noise_scale': float(self.noise_scale),
            'initial_estimate': self.initial_estimate.tolist(),
        }
        if self.prior_covariance is not None:
            data['prior_covariance'] = np.asarray(self.prior_covariance).tolist()
        return data

    def initial_belief(self, initial_estimate: Optional[np.ndarray] = None) -> BeliefState:
        mean = self.initial_estimate if initial_estimate is None else initial_estimate
        if self.kind is BeliefKind.GAUSSIAN:
            return GaussianBelief(mu=mean, Sigma=self.prior_covariance)
        return PointEstimate(theta_hat=mean)

    def update(self, belief: BeliefState, x: np.ndarray, u1: np.ndarray,
               policy: Union[PlayerPolicy, FeedbackPolicyStage]) -> BeliefState:
        if self.kind is BeliefKind.GAUSSIAN:
            return gaussian_update(belief, x, u1, policy, self.noise_scale)
        return mle_update(belief, x, u1, policy, self.alpha)


@dataclass(frozen=True)
class BeliefGainSchedule:
    """Per-stage mean-update gains, theta_hat' = theta_hat + M_t (u1 - pi1(x; theta_hat)).

    ``covariances`` holds Sigma_0..Sigma_T for Gaussian beliefs and is None for
    point estimates.
    """
    gains: List[np.ndarray]
    covariances: Optional[List[np.ndarray]] = None


def belief_gain_schedule(policies: Sequence[FeedbackPolicyStage],
                         config: EstimatorConfig) -> BeliefGainSchedule:
    """Precompute the state-independent gains of the estimate dynamics.

    With point estimates M_t = alpha G_t^T. With Gaussian beliefs the covariance
    recursion does not depend on the observations, so Sigma_t and
    M_t = Sigma_t G_t^T S_t^-1 are computed once from the prior.
    """
    if config.kind is BeliefKind.POINT:
        gains = [config.alpha * _certain_policy(stage).theta_jacobian.T for stage in policies]
        return BeliefGainSchedule(gains=gains)

    Sigma = _covariance(config.prior_covariance)
    gains, covariances = [], [Sigma]
    for stage in policies:
        G = _certain_policy(stage).theta_jacobian
        S = config.noise_scale * np.eye(G.shape[0]) + G @ Sigma @ G.T
        gain = linalg.solve(S, G @ Sigma, assume_a='pos').T
        Sigma = _covariance(Sigma - gain @ G @ Sigma)
        gains.append(gain)
        covariances.append(Sigma)
    return BeliefGainSchedule(gains=gains, covariances=covariances)
