"""Closed-loop interaction rollouts and their metrics."""

import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core_model import CERTAIN_PLAYER, GameDefinition
from .estimation import (
    BeliefGainSchedule,
    EstimatorConfig,
    GaussianBelief,
    PointEstimate,
    belief_gain_schedule,
    expected_intent,
)
from .ilq_games import DEFAULT_MAX_ITERS, DEFAULT_TOL, solve_ilq
from .intent_demo import (
    AugmentedState,
    IntentDemoError,
    TeachingPolicyStage,
    TeachingWeights,
    build_augmented_lq,
    solve_affine_lqr,
    solve_ilqr_augmented,
)
from .lq_nash import FeedbackPolicyStage, solve_feedback_nash


logger = logging.getLogger(__name__)

DYNAMICS_TOL = 1e-9


class SimulationError(Exception):
    """Exception raised for failed or inconsistent rollouts."""
    pass


class InteractionKind(Enum):
    ACTIVE = "active"
    PASSIVE = "passive"
    COMPLETE_INFO = "complete_info"


@dataclass(frozen=True)
class InteractionModel:
    """How the certain player acts and whether the others hold beliefs.

    ACTIVE plays the teaching policy for (rho1, rho2); PASSIVE plays
    pi1(x; theta*) while the others learn; COMPLETE_INFO lets every player
    play pi(x; theta*).
    """
    kind: InteractionKind
    rho1: Optional[float] = None
    rho2: Optional[float] = None

    def __post_init__(self):
        if self.kind is InteractionKind.ACTIVE:
            if self.rho1 is None or self.rho2 is None:
                raise SimulationError("active model needs rho1 and rho2")
            try:
                TeachingWeights(self.rho1, self.rho2, np.zeros(1))
            except IntentDemoError as e:
                raise SimulationError(f"invalid active model: {e}") from e
        elif self.rho1 is not None or self.rho2 is not None:
            raise SimulationError(f"{self.kind.value} model takes no teaching weights")

    @classmethod
    def active(cls, rho1: float, rho2: float) -> 'InteractionModel':
        return cls(InteractionKind.ACTIVE, float(rho1), float(rho2))

    @classmethod
    def passive(cls) -> 'InteractionModel':
        return cls(InteractionKind.PASSIVE)

    @classmethod
    def complete_info(cls) -> 'InteractionModel':
        return cls(InteractionKind.COMPLETE_INFO)

    @property
    def has_beliefs(self) -> bool:
        return self.kind is not InteractionKind.COMPLETE_INFO

    @property
    def ratio(self) -> Optional[float]:
        if self.kind is not InteractionKind.ACTIVE:
            return None
        return float('inf') if self.rho1 == 0 else self.rho2 / self.rho1

    @property
    def label(self) -> str:
        if self.kind is InteractionKind.ACTIVE:
            return f"active-r{self.rho1:g}-{self.rho2:g}"
        return self.kind.value

    def weights(self, theta_star: np.ndarray) -> TeachingWeights:
        if self.kind is not InteractionKind.ACTIVE:
            raise SimulationError(f"{self.kind.value} model has no teaching weights")
        return TeachingWeights(self.rho1, self.rho2, theta_star)


@dataclass
class InteractionPlan:
    """A solved game ready to be rolled out under any interaction model.

    Attributes:
        game: Game definition.
        policies: Feedback Nash policies (exact, or iLQ about ``x0``).
        estimator: Belief model of the uncertain players.
        x0: Initial physical state the policies were solved from.
        solve_theta: Intent the policies were solved at.
        converged: Whether the Nash solve converged (always True for LQ games).
    """
    game: GameDefinition
    policies: List[FeedbackPolicyStage]
    estimator: EstimatorConfig
    x0: np.ndarray
    solve_theta: np.ndarray
    converged: bool = True
    _teaching: Dict[tuple, List[TeachingPolicyStage]] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def solve(cls, game: GameDefinition, estimator: EstimatorConfig, x0: np.ndarray,
              theta: np.ndarray, max_iters: int = DEFAULT_MAX_ITERS,
              tol: float = DEFAULT_TOL) -> 'InteractionPlan':
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        x0 = np.asarray(x0, dtype=float)
        if game.is_linear:
            policies, _ = solve_feedback_nash(game)
            return cls(game=game, policies=policies, estimator=estimator, x0=x0, solve_theta=theta)
        solution = solve_ilq(game, theta, x0, max_iters=max_iters, tol=tol)
        return cls(game=game, policies=solution.policies, estimator=estimator, x0=x0,
                   solve_theta=theta, converged=solution.converged)

    @property
    def schedule(self) -> BeliefGainSchedule:
        return belief_gain_schedule(self.policies, self.estimator)

    def teaching_policy(self, model: InteractionModel, theta_star: np.ndarray,
                        init: AugmentedState) -> List[TeachingPolicyStage]:
        """Teaching policy for ``model``, solved once and cached.

        LQ games get the exact affine policy, parametric in theta*; nonlinear
        games get the augmented iLQR policy for this theta* and initial state.
        """
        theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
        weights = model.weights(theta_star)
        if self.game.is_linear:
            key = (model.rho1, model.rho2)
        else:
            key = (model.rho1, model.rho2, tuple(theta_star), tuple(init.as_vector()))
        with self._lock:
            if key in self._teaching:
                return self._teaching[key]
        if self.game.is_linear:
            problem = build_augmented_lq(self.game, self.policies, self.estimator.alpha, weights,
                                         schedule=self.schedule)
            policy, _ = solve_affine_lqr(problem)
        else:
            policy = solve_ilqr_augmented(self.game, self.policies, self.estimator, weights, init).policies
        with self._lock:
            self._teaching[key] = policy
        return policy


@dataclass
class RolloutRecord:
    """Everything a rollout produced.

    Attributes:
        model: Interaction model that generated the record.
        states: States x_0..x_T, shape (T + 1, n).
        controls: Per-player controls, shape (T, m_i).
        stage_costs: Task costs, shape (N, T + 1); column T is terminal.
        theta_schedule: True intent at every stage, shape (T + 1, p).
        belief_means: Estimates per uncertain player, shape (N - 1, T + 1, p).
        belief_covariances: Covariances, shape (N - 1, T + 1, p, p), Gaussian only.
        seed: Actuation-noise seed.
        noise_std: Actuation-noise standard deviation.
        switch: Intent switch (stage, new intent) if any.
    """
    model: InteractionModel
    states: np.ndarray
    controls: List[np.ndarray]
    stage_costs: np.ndarray
    theta_schedule: np.ndarray
    belief_means: Optional[np.ndarray] = None
    belief_covariances: Optional[np.ndarray] = None
    seed: Optional[int] = None
    noise_std: float = 0.0
    switch: Optional[Tuple[int, np.ndarray]] = None

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def num_players(self) -> int:
        return self.stage_costs.shape[0]

    @property
    def theta_star(self) -> np.ndarray:
        return self.theta_schedule[0]

    def _belief_index(self, player: int) -> int:
        if self.belief_means is None:
            raise SimulationError(f"{self.model.label} record holds no beliefs")
        if player == CERTAIN_PLAYER or not 0 <= player < self.num_players:
            raise SimulationError(f"player {player} holds no belief")
        return player - 1

    def belief_errors(self, player: int) -> np.ndarray:
        """||theta_hat_t - theta*_t|| for t = 0..T."""
        means = self.belief_means[self._belief_index(player)]
        return np.linalg.norm(means - self.theta_schedule, axis=1)

    def task_cost(self, player: int) -> float:
        return float(np.sum(self.stage_costs[player]))

    def check_dynamics(self, game: GameDefinition, tol: float = DYNAMICS_TOL) -> None:
        """Raise unless every transition of the record is reproduced by ``game``."""
        for t in range(self.horizon):
            expected = game.transition(t, self.states[t], [u[t] for u in self.controls])
            gap = float(np.max(np.abs(expected - self.states[t + 1])))
            if gap > tol * max(1.0, float(np.max(np.abs(expected)))):
                raise SimulationError(f"record violates the dynamics at step {t} (gap {gap:.3e})")


def intent_schedule(theta_star: np.ndarray, horizon: int,
                    switch: Optional[Tuple[int, np.ndarray]] = None) -> np.ndarray:
    """True intent at stages 0..T, changed from stage ``switch[0]`` on."""
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    schedule = np.tile(theta_star, (horizon + 1, 1))
    if switch is not None:
        t_switch, new_theta = switch
        if not 0 <= t_switch <= horizon:
            raise SimulationError(f"switch stage {t_switch} outside 0..{horizon}")
        schedule[t_switch:] = np.atleast_1d(np.asarray(new_theta, dtype=float))
    return schedule


def _clipped(game: GameDefinition, belief):
    if isinstance(belief, PointEstimate):
        return PointEstimate(theta_hat=game.clip_intent(belief.theta_hat))
    return belief


def rollout(plan: InteractionPlan, model: InteractionModel, theta_star: np.ndarray,
            initial: AugmentedState, switch: Optional[Tuple[int, np.ndarray]] = None,
            noise_std: float = 0.0, seed: Optional[int] = None) -> RolloutRecord:
    """Step the closed loop for T stages.

    The certain player acts per ``model``; each uncertain player acts on its
    expected intent and then updates its belief from (x_t, u1_t). From stage
    ``switch[0]`` on the true intent is ``switch[1]``; only the certain
    player's behaviour (and everyone's under COMPLETE_INFO) sees the change.

    Args:
        plan: Solved game.
        model: Interaction model.
        theta_star: True intent at stage 0.
        initial: Initial state and estimates (estimates ignored under COMPLETE_INFO).
        switch: Optional (stage, new intent).
        noise_std: Standard deviation of Gaussian actuation noise on every control.
        seed: Seed of the actuation noise.

    Returns:
        RolloutRecord of the interaction.

    Raises:
        SimulationError: If a state becomes non-finite.
    """
    game, policies = plan.game, plan.policies
    dims = game.dims
    T, N = dims.T, dims.num_players
    thetas = intent_schedule(theta_star, T, switch)
    rng = np.random.default_rng(seed)

    states = np.zeros((T + 1, dims.n))
    states[0] = initial.x
    controls = [np.zeros((T, m)) for m in dims.control_dims]
    stage_costs = np.zeros((N, T + 1))

    beliefs = []
    teaching = None
    if model.has_beliefs:
        if len(initial.theta_hats) != N - 1:
            raise SimulationError(f"expected {N - 1} initial estimates, got {len(initial.theta_hats)}")
        beliefs = [_clipped(game, plan.estimator.initial_belief(h)) for h in initial.theta_hats]
        if model.kind is InteractionKind.ACTIVE:
            teaching = plan.teaching_policy(model, thetas[0], initial)
    means = np.zeros((N - 1, T + 1, dims.p))
    covariances = np.zeros((N - 1, T + 1, dims.p, dims.p))

    for t in range(T):
        x, theta = states[t], thetas[t]
        for j, belief in enumerate(beliefs):
            means[j, t] = expected_intent(belief)
            if isinstance(belief, GaussianBelief):
                covariances[j, t] = belief.Sigma

        if model.kind is InteractionKind.COMPLETE_INFO:
            us = [policy.act(x, theta) for policy in policies[t].players]
        else:
            if model.kind is InteractionKind.ACTIVE:
                z = np.concatenate([x, *means[:, t]])
                leader = teaching[t].act(z, theta)
            else:
                leader = policies[t][CERTAIN_PLAYER].act(x, theta)
            us = [leader] + [policies[t][j + 1].act(x, means[j, t]) for j in range(N - 1)]
        if noise_std > 0:
            us = [u + rng.normal(0.0, noise_std, size=u.shape) for u in us]

        for i, u in enumerate(us):
            controls[i][t] = u
            stage_costs[i, t] = game.stage_cost(t, i, x, u, theta)
        x_next = game.transition(t, x, us)
        if not np.all(np.isfinite(x_next)):
            raise SimulationError(f"non-finite state at step {t + 1}")
        states[t + 1] = x_next
        beliefs = [_clipped(game, plan.estimator.update(b, x, us[CERTAIN_PLAYER], policies[t]))
                   for b in beliefs]

    for j, belief in enumerate(beliefs):
        means[j, T] = expected_intent(belief)
        if isinstance(belief, GaussianBelief):
            covariances[j, T] = belief.Sigma
    for i in range(N):
        stage_costs[i, T] = game.terminal_cost(i, states[T], thetas[T])

    gaussian = bool(beliefs) and isinstance(beliefs[0], GaussianBelief)
    logger.debug(f"Rollout {model.label}: player-1 task cost {np.sum(stage_costs[0]):.6g}")
    return RolloutRecord(
        model=model,
        states=states,
        controls=controls,
        stage_costs=stage_costs,
        theta_schedule=thetas,
        belief_means=means if model.has_beliefs else None,
        belief_covariances=covariances if gaussian else None,
        seed=seed,
        noise_std=noise_std,
        switch=switch,
    )


def regret(executed: RolloutRecord, reference: RolloutRecord, player: int) -> float:
    """Sum over stages of the task-cost difference between two records.

    Raises:
        SimulationError: If the records do not share horizon, players and intents.
    """
    if executed.stage_costs.shape != reference.stage_costs.shape:
        raise SimulationError(
            f"records differ in horizon or players: {executed.stage_costs.shape} "
            f"vs {reference.stage_costs.shape}"
        )
    if not np.array_equal(executed.theta_schedule, reference.theta_schedule):
        raise SimulationError("records were generated for different intents")
    return float(np.sum(executed.stage_costs[player] - reference.stage_costs[player]))


def time_to_convergence(record: RolloutRecord, player: int, epsilon: float) -> Optional[int]:
    """First stage at which the player's belief error is below epsilon, None if never."""
    errors = record.belief_errors(player)
    hits = np.flatnonzero(errors < epsilon)
    return int(hits[0]) if hits.size else None


def convergence_after(record: RolloutRecord, player: int, epsilon: float,
                      start: int) -> Optional[int]:
    """Steps after ``start`` until the belief error falls below epsilon."""
    errors = record.belief_errors(player)[start:]
    hits = np.flatnonzero(errors < epsilon)
    return int(hits[0]) if hits.size else None


def run_models(plan: InteractionPlan, models: Sequence[InteractionModel], theta_star: np.ndarray,
               initial: AugmentedState, switch: Optional[Tuple[int, np.ndarray]] = None,
               noise_std: float = 0.0, seed: Optional[int] = None) -> Dict[str, RolloutRecord]:
    """Roll out several models from the same initial condition, keyed by label."""
    return {
        model.label: rollout(plan, model, theta_star, initial, switch, noise_std, seed)
        for model in models
    }
