"""Teaching policies of the certain player over the joint physical and belief state.

The augmented state is z = [x; theta_hat^1; ...; theta_hat^{N-1}]. Uncertain
players are folded into the dynamics through their feedback policies, and
their estimates evolve with the precomputed belief gains M_t:

    theta_hat' = theta_hat + M_t (u1 - pi1(x; theta_hat)).

The certain player minimizes rho1 * c1 + rho2 * sum_j ||theta_hat^j - theta*||^2.
Policies are computed parametrically in theta*, u1 = -K z - K_theta_star theta* - k.
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core_model import (
    CERTAIN_PLAYER,
    CostDerivatives,
    GameDefinition,
    LinearStage,
    NonlinearStage,
    QuadraticCostStage,
    TerminalCost,
    _frozen,
    finite_difference_gradient,
    linearize,
    stage_cost_derivatives,
    terminal_cost_derivatives,
)
from .estimation import BeliefGainSchedule, EstimatorConfig, belief_gain_schedule
from .ilq_games import (
    DEFAULT_MAX_ITERS,
    DEFAULT_STEP_GRID,
    DEFAULT_TOL,
    local_lq_game,
    reexpress_policies,
    rollout_about_nominal,
)
from .lq_nash import (
    DegenerateGameError,
    FeedbackPolicyStage,
    ValueStage,
    backward_pass,
    rollout_policies,
)


logger = logging.getLogger(__name__)

CONTROL_REGULARIZATION = 1e-6
OBJECTIVE_SLACK = 1e-12


class IntentDemoError(Exception):
    """Exception raised when a teaching problem cannot be built or solved."""
    pass


@dataclass(frozen=True)
class AugmentedState:
    """Physical state plus one intent estimate per uncertain player."""
    x: np.ndarray
    theta_hats: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, 'x', _frozen(np.atleast_1d(self.x)))
        object.__setattr__(
            self, 'theta_hats', tuple(_frozen(np.atleast_1d(h)) for h in self.theta_hats))

    @property
    def dim(self) -> int:
        return self.x.size + sum(h.size for h in self.theta_hats)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, *self.theta_hats])

    @classmethod
    def from_vector(cls, z: np.ndarray, n: int, p: int, count: int) -> 'AugmentedState':
        z = np.asarray(z, dtype=float)
        if z.shape != (n + count * p,):
            raise IntentDemoError(f"augmented state has shape {z.shape}, expected ({n + count * p},)")
        return cls(x=z[:n], theta_hats=tuple(z[n + j * p:n + (j + 1) * p] for j in range(count)))

    @classmethod
    def uniform(cls, x: np.ndarray, theta_hat: np.ndarray, count: int) -> 'AugmentedState':
        """Every uncertain player starts from the same estimate."""
        return cls(x=x, theta_hats=tuple(np.atleast_1d(theta_hat) for _ in range(count)))


@dataclass(frozen=True)
class TeachingWeights:
    """Trade-off between task cost (rho1) and belief alignment (rho2)."""
    rho1: float
    rho2: float
    theta_star: np.ndarray

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise IntentDemoError(f"weights must be non-negative (rho1={self.rho1}, rho2={self.rho2})")
        if self.rho1 + self.rho2 <= 0:
            raise IntentDemoError("rho1 + rho2 must be positive")
        object.__setattr__(self, 'rho1', float(self.rho1))
        object.__setattr__(self, 'rho2', float(self.rho2))
        object.__setattr__(self, 'theta_star', _frozen(np.atleast_1d(self.theta_star)))

    @property
    def control_regularization(self) -> float:
        return CONTROL_REGULARIZATION if self.rho1 == 0.0 else 0.0

    @property
    def ratio(self) -> float:
        return float('inf') if self.rho1 == 0.0 else self.rho2 / self.rho1


@dataclass(frozen=True)
class TeachingPolicyStage:
    """Affine teaching law u1 = -K z - K_theta_star theta* - k."""
    K: np.ndarray
    K_theta_star: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        for name in ('K', 'K_theta_star'):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))
        object.__setattr__(self, 'k', _frozen(np.atleast_1d(self.k)))
        if not all(np.all(np.isfinite(a)) for a in (self.K, self.K_theta_star, self.k)):
            raise IntentDemoError("teaching policy has non-finite entries")

    def act(self, z: np.ndarray, theta_star: np.ndarray) -> np.ndarray:
        theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
        return -(self.K @ z) - (self.K_theta_star @ theta_star) - self.k


@dataclass(frozen=True)
class AugmentedLQProblem:
    """Single-player LQ problem over z with intent-parametric costs in theta*.

    With rho1 = 0 the stage controls are the demonstration signal
    v = u1 - pi1(x; theta_hat^1), penalized by the control regularization, and
    ``signal_feedback`` maps them back: u1 = v - F_t z - k_t.
    """
    stages: Tuple[LinearStage, ...]
    costs: Tuple[Tuple[QuadraticCostStage], ...]
    n: int
    p: int
    num_estimates: int
    weights: TeachingWeights
    signal_feedback: Tuple[TeachingPolicyStage, ...] = ()

    @property
    def horizon(self) -> int:
        return len(self.stages)

    @property
    def state_dim(self) -> int:
        return self.n + self.num_estimates * self.p

    def belief_rows(self, j: int) -> slice:
        return slice(self.n + j * self.p, self.n + (j + 1) * self.p)


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise IntentDemoError(f"step size alpha must lie in [0, 1), got {alpha}")


def _check_policies(game: GameDefinition, policies: Sequence[FeedbackPolicyStage]) -> None:
    if len(policies) != game.dims.T:
        raise IntentDemoError(f"expected {game.dims.T} policy stages, got {len(policies)}")
    if any(len(stage) != game.dims.num_players for stage in policies):
        raise IntentDemoError("policy stages do not cover every player")


def _augmented_quadratic(cost: QuadraticCostStage, weights: TeachingWeights, n: int, p: int,
                         count: int) -> QuadraticCostStage:
    """rho1 * c1 + rho2 * sum_j ||theta_hat^j - theta*||^2 with the theta*'theta* constant dropped."""
    dim = n + count * p
    Q = np.zeros((dim, dim))
    Q[:n, :n] = weights.rho1 * np.asarray(cost.Q)
    Q[n:, n:] = weights.rho2 * np.eye(count * p)
    ell0 = np.concatenate([weights.rho1 * np.asarray(cost.ell0), np.zeros(count * p)])
    L_theta = np.vstack(
        [weights.rho1 * cost.intent_matrix(p)] + [-2.0 * weights.rho2 * np.eye(p)] * count)
    if cost.is_terminal:
        return QuadraticCostStage(Q=Q, ell0=ell0, L_theta=L_theta)
    m = cost.R.shape[0]
    R = weights.rho1 * np.asarray(cost.R) + weights.control_regularization * np.eye(m)
    return QuadraticCostStage(Q=Q, R=R, ell0=ell0, L_theta=L_theta, r=weights.rho1 * np.asarray(cost.r))


def build_augmented_lq(game: GameDefinition, policies: Sequence[FeedbackPolicyStage], alpha: float,
                       weights: TeachingWeights,
                       schedule: Optional[BeliefGainSchedule] = None) -> AugmentedLQProblem:
    """Exact LQ teaching problem of a linear-quadratic game.

    Args:
        game: Linear game definition.
        policies: Feedback Nash policies of ``game``.
        alpha: Step size of the point-estimate update.
        weights: Task and demonstration weights.
        schedule: Belief gains to use instead of alpha G^T (Gaussian beliefs).

    Returns:
        AugmentedLQProblem whose estimate rows depend only on x, their own
        estimate and u1.

    Raises:
        IntentDemoError: On a nonlinear game, a bad step size or mismatched policies.
    """
    if not game.is_linear:
        raise IntentDemoError("build_augmented_lq needs a linear-quadratic game")
    _check_alpha(alpha)
    _check_policies(game, policies)
    dims = game.dims
    n, p, count = dims.n, dims.p, dims.num_players - 1
    if schedule is None:
        schedule = belief_gain_schedule(
            policies, EstimatorConfig(alpha=alpha, initial_estimate=np.zeros(p)))
    dim = n + count * p

    stages, feedback = [], []
    for t, lin in enumerate(game.linear_stages):
        leader = policies[t][CERTAIN_PLAYER]
        followers = policies[t].players[1:]
        M = np.asarray(schedule.gains[t])
        B = [np.asarray(b) for b in lin.B]

        A_z = np.zeros((dim, dim))
        A_z[:n, :n] = lin.A - sum(B[j + 1] @ f.K_x for j, f in enumerate(followers))
        drift = np.asarray(lin.d) - sum(B[j + 1] @ f.k for j, f in enumerate(followers))
        drifts = [drift]
        for j, follower in enumerate(followers):
            rows = slice(n + j * p, n + (j + 1) * p)
            A_z[:n, rows] = -B[j + 1] @ follower.K_theta
            A_z[rows, :n] = M @ leader.K_x
            A_z[rows, rows] = np.eye(p) + M @ leader.K_theta
            drifts.append(M @ leader.k)
        B_z = np.vstack([B[CERTAIN_PLAYER]] + [M] * count)
        d_z = np.concatenate(drifts)
        if weights.rho1 == 0.0:
            F = np.zeros((B_z.shape[1], dim))
            F[:, :n] = leader.K_x
            F[:, n:n + p] = leader.K_theta
            A_z = A_z - B_z @ F
            d_z = d_z - B_z @ leader.k
            feedback.append(TeachingPolicyStage(K=F, K_theta_star=np.zeros((F.shape[0], p)),
                                                k=leader.k))
        stages.append(LinearStage(A=A_z, B=(B_z,), d=d_z))

    costs = tuple(
        (_augmented_quadratic(stage_costs[CERTAIN_PLAYER], weights, n, p, count),)
        for stage_costs in game.cost_stages
    )
    return AugmentedLQProblem(stages=tuple(stages), costs=costs, n=n, p=p,
                              num_estimates=count, weights=weights,
                              signal_feedback=tuple(feedback))


def _teaching_stages(policies) -> List[TeachingPolicyStage]:
    return [
        TeachingPolicyStage(K=stage[0].K_x, K_theta_star=stage[0].K_theta, k=stage[0].k)
        for stage in policies
    ]


def solve_affine_lqr(problem: AugmentedLQProblem) -> Tuple[List[TeachingPolicyStage], List[ValueStage]]:
    """Globally optimal affine teaching policy of an augmented LQ problem.

    Raises:
        IntentDemoError: If a stage's control Hessian is singular.
    """
    try:
        policies, values = backward_pass(problem.stages, problem.costs, problem.p)
    except DegenerateGameError as e:
        raise IntentDemoError(
            f"singular control Hessian ({e}); use rho1 > 0 or a control regularization"
        ) from e
    logger.debug(f"Solved augmented LQR: dim={problem.state_dim}, T={problem.horizon}")
    teaching = _teaching_stages(policies)
    if problem.signal_feedback:
        teaching = [
            TeachingPolicyStage(K=s.K + f.K, K_theta_star=s.K_theta_star, k=s.k + f.k)
            for s, f in zip(teaching, problem.signal_feedback)
        ]
    return teaching, values


def _split(z: np.ndarray, n: int, p: int, count: int) -> Tuple[np.ndarray, np.ndarray]:
    return z[:n], z[n:].reshape(count, p)


def _augmented_transition(stage: NonlinearStage, policy: FeedbackPolicyStage, gain: np.ndarray,
                          n: int, p: int, count: int, z, controls) -> np.ndarray:
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    u1 = np.atleast_1d(np.asarray(controls[0], dtype=float))
    followers = policy.players[1:]
    us = [u1] + [f.act(x, hats[j]) for j, f in enumerate(followers)]
    x_next = np.asarray(stage.transition(x, us), dtype=float)
    leader = policy[CERTAIN_PLAYER]
    hats_next = [h + gain @ (u1 - leader.act(x, h)) for h in hats]
    return np.concatenate([x_next, *hats_next])


def _augmented_jacobian(stage: NonlinearStage, policy: FeedbackPolicyStage, gain: np.ndarray,
                        n: int, p: int, count: int, z, controls):
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    u1 = np.atleast_1d(np.asarray(controls[0], dtype=float))
    followers = policy.players[1:]
    lin = linearize(stage, x, [u1] + [f.act(x, hats[j]) for j, f in enumerate(followers)])
    leader = policy[CERTAIN_PLAYER]

    dim = n + count * p
    A = np.zeros((dim, dim))
    A[:n, :n] = lin.A - sum(lin.B[j + 1] @ f.K_x for j, f in enumerate(followers))
    for j, follower in enumerate(followers):
        rows = slice(n + j * p, n + (j + 1) * p)
        A[:n, rows] = -lin.B[j + 1] @ follower.K_theta
        A[rows, :n] = gain @ leader.K_x
        A[rows, rows] = np.eye(p) + gain @ leader.K_theta
    return A, [np.vstack([lin.B[CERTAIN_PLAYER]] + [gain] * count)]


def _demo_cost(hats: np.ndarray, theta_star: np.ndarray) -> float:
    return float(np.sum((hats - theta_star) ** 2))


def _augmented_cost(stage: NonlinearStage, weights: TeachingWeights, n: int, p: int, count: int,
                    z, u, theta_star) -> float:
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    u = np.atleast_1d(u)
    cost = weights.rho2 * _demo_cost(hats, theta_star) + weights.control_regularization * float(u @ u)
    if weights.rho1:
        cost += weights.rho1 * float(stage.costs[CERTAIN_PLAYER](x, u, theta_star))
    return cost


def _augmented_cost_derivatives(stage: NonlinearStage, weights: TeachingWeights, n: int, p: int,
                                count: int, z, u, theta_star) -> CostDerivatives:
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    task = stage_cost_derivatives(stage, CERTAIN_PLAYER, x, u, theta_star)
    dim = n + count * p
    H = np.zeros((dim, dim))
    H[:n, :n] = weights.rho1 * np.asarray(task.Hxx)
    H[n:, n:] = 2.0 * weights.rho2 * np.eye(count * p)
    eps = weights.control_regularization
    return CostDerivatives(
        gx=np.concatenate([weights.rho1 * np.asarray(task.gx),
                           2.0 * weights.rho2 * (hats - theta_star).ravel()]),
        Hxx=H,
        gu=weights.rho1 * np.asarray(task.gu) + 2.0 * eps * u,
        Huu=weights.rho1 * np.atleast_2d(task.Huu) + 2.0 * eps * np.eye(u.size),
    )


def _augmented_terminal(terminal: TerminalCost, weights: TeachingWeights, n: int, p: int,
                        count: int, z, theta_star) -> float:
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    cost = weights.rho2 * _demo_cost(hats, theta_star)
    if weights.rho1:
        cost += weights.rho1 * float(terminal.costs[CERTAIN_PLAYER](x, theta_star))
    return cost


def _augmented_terminal_derivatives(terminal: TerminalCost, weights: TeachingWeights, n: int,
                                    p: int, count: int, z, theta_star) -> CostDerivatives:
    x, hats = _split(np.asarray(z, dtype=float), n, p, count)
    task = terminal_cost_derivatives(terminal, CERTAIN_PLAYER, x, theta_star)
    dim = n + count * p
    H = np.zeros((dim, dim))
    H[:n, :n] = weights.rho1 * np.asarray(task.Hxx)
    H[n:, n:] = 2.0 * weights.rho2 * np.eye(count * p)
    return CostDerivatives(
        gx=np.concatenate([weights.rho1 * np.asarray(task.gx),
                           2.0 * weights.rho2 * (hats - theta_star).ravel()]),
        Hxx=H,
    )


@dataclass(frozen=True)
class AugmentedProblem:
    """Augmented teaching problem of a nonlinear game, one player acting on z."""
    nonlinear_stages: Tuple[NonlinearStage, ...]
    terminal: TerminalCost
    n: int
    p: int
    num_estimates: int
    weights: TeachingWeights

    @property
    def horizon(self) -> int:
        return len(self.nonlinear_stages)

    @property
    def state_dim(self) -> int:
        return self.n + self.num_estimates * self.p

    def transition(self, t: int, z: np.ndarray, controls: Sequence[np.ndarray]) -> np.ndarray:
        return self.nonlinear_stages[t].transition(z, controls)

    def within_bounds(self, t: int, z: np.ndarray) -> bool:
        return self.nonlinear_stages[min(t, self.horizon - 1)].within_bounds(z)


def build_augmented_problem(game: GameDefinition, policies: Sequence[FeedbackPolicyStage],
                            schedule: BeliefGainSchedule,
                            weights: TeachingWeights) -> AugmentedProblem:
    """Augmented teaching problem for any game (linear games are wrapped)."""
    _check_policies(game, policies)
    game = game.as_nonlinear()
    n, p, count = game.dims.n, game.dims.p, game.dims.num_players - 1
    pad = np.full(count * p, np.inf)

    stages = []
    for t, stage in enumerate(game.nonlinear_stages):
        args = (policies[t], np.asarray(schedule.gains[t]), n, p, count)
        stages.append(NonlinearStage(
            transition=partial(_augmented_transition, stage, *args),
            costs=(partial(_augmented_cost, stage, weights, n, p, count),),
            jacobian=partial(_augmented_jacobian, stage, *args),
            cost_derivatives=(partial(_augmented_cost_derivatives, stage, weights, n, p, count),),
            state_lower=None if stage.state_lower is None else np.concatenate([stage.state_lower, -pad]),
            state_upper=None if stage.state_upper is None else np.concatenate([stage.state_upper, pad]),
        ))
    terminal = TerminalCost(
        costs=(partial(_augmented_terminal, game.terminal, weights, n, p, count),),
        derivatives=(partial(_augmented_terminal_derivatives, game.terminal, weights, n, p, count),),
    )
    return AugmentedProblem(nonlinear_stages=tuple(stages), terminal=terminal, n=n, p=p,
                            num_estimates=count, weights=weights)


def augmented_objective(problem: AugmentedProblem, states: np.ndarray, controls: np.ndarray,
                        theta_star: Optional[np.ndarray] = None, start: int = 0) -> float:
    """rho1 * c1 + rho2 * c_demo summed from stage ``start`` to the terminal stage.

    ``states`` holds z_start..z_T and ``controls`` u1 at stages start..T-1.
    """
    theta_star = problem.weights.theta_star if theta_star is None else np.atleast_1d(theta_star)
    total = 0.0
    for offset, t in enumerate(range(start, problem.horizon)):
        total += problem.nonlinear_stages[t].costs[0](states[offset], controls[offset], theta_star)
    return total + problem.terminal.costs[0](states[-1], theta_star)


def _rollout(problem: AugmentedProblem, z0: np.ndarray, controls: np.ndarray,
             start: int = 0) -> Optional[np.ndarray]:
    states = np.zeros((problem.horizon - start + 1, problem.state_dim))
    states[0] = z0
    for offset, t in enumerate(range(start, problem.horizon)):
        z_next = problem.transition(t, states[offset], [controls[offset]])
        if not problem.within_bounds(t, z_next):
            return None
        states[offset + 1] = z_next
    return states


def passive_controls(problem: AugmentedProblem, policies: Sequence[FeedbackPolicyStage],
                     z0: np.ndarray, theta_star: np.ndarray) -> np.ndarray:
    """Controls of the certain player playing pi1(x; theta*) while the others learn."""
    m = policies[0][CERTAIN_PLAYER].K_x.shape[0]
    controls = np.zeros((problem.horizon, m))
    z = np.asarray(z0, dtype=float)
    for t in range(problem.horizon):
        controls[t] = policies[t][CERTAIN_PLAYER].act(z[:problem.n], theta_star)
        z = problem.transition(t, z, [controls[t]])
        if not problem.within_bounds(t, z):
            raise IntentDemoError(f"passive rollout leaves the admissible states at stage {t}")
    return controls


@dataclass
class TeachingSolution:
    """Result of the augmented iLQR.

    Attributes:
        policies: Teaching policy stages re-expressed about the final nominal.
        states: Nominal augmented states, shape (T + 1, n + (N - 1) p).
        controls: Nominal certain-player controls, shape (T, m_1).
        objective: Augmented objective of the nominal.
        passive_objective: Augmented objective of the passive warm start.
        iterations: Iterations that moved the nominal by at least tol.
        converged: Whether the iteration stopped on tol or on a non-improving step.
    """
    policies: List[TeachingPolicyStage]
    states: np.ndarray
    controls: np.ndarray
    objective: float
    passive_objective: float
    iterations: int = 0
    converged: bool = False


def solve_ilqr_augmented(game: GameDefinition, policies: Sequence[FeedbackPolicyStage],
                         estimator: EstimatorConfig, weights: TeachingWeights,
                         init: AugmentedState, max_iters: int = DEFAULT_MAX_ITERS,
                         tol: float = DEFAULT_TOL,
                         step_grid: Sequence[float] = DEFAULT_STEP_GRID) -> TeachingSolution:
    """Iterative LQR on the augmented teaching problem.

    The iteration starts from the passive trajectory and accepts a line-search
    step only if the augmented objective does not increase. For Gaussian
    beliefs the covariance schedule is precomputed from the prior and the
    augmented state carries the means.

    Args:
        game: Game the policies were solved on.
        policies: Feedback Nash (or converged iLQ) policies.
        estimator: Belief model of the uncertain players.
        weights: Task and demonstration weights; ``theta_star`` is the true intent.
        init: Initial physical state and estimates.
        max_iters: Iteration budget.
        tol: Max-norm trajectory change that counts as converged.
        step_grid: Feedforward scalings tried from first to last.

    Returns:
        TeachingSolution with time-varying affine policies about the nominal.

    Raises:
        IntentDemoError: If no step of the grid yields a finite rollout.
    """
    if max_iters < 1 or tol <= 0:
        raise IntentDemoError(f"invalid iteration settings (max_iters={max_iters}, tol={tol})")
    schedule = belief_gain_schedule(policies, estimator)
    problem = build_augmented_problem(game, policies, schedule, weights)
    theta_star = np.asarray(weights.theta_star)
    z0 = init.as_vector()
    if z0.size != problem.state_dim:
        raise IntentDemoError(f"initial augmented state has size {z0.size}, expected {problem.state_dim}")

    controls = passive_controls(problem, policies, z0, theta_star)
    states = _rollout(problem, z0, controls)
    objective = augmented_objective(problem, states, controls, theta_star)
    passive_objective = objective
    iterations, converged = 0, False
    local_policies: List[FeedbackPolicyStage] = []

    for iteration in range(1, max_iters + 1):
        stages, costs = local_lq_game(problem, states, [controls], theta_star)
        try:
            local_policies, _ = backward_pass(stages, costs, problem.p)
        except DegenerateGameError as e:
            raise IntentDemoError(f"singular control Hessian at iteration {iteration}: {e}") from e

        accepted, finite = None, False
        for eta in step_grid:
            candidate = rollout_about_nominal(
                problem, z0, states, [controls], local_policies, theta_star, eta)
            if candidate is None:
                continue
            finite = True
            new_states, (new_controls,) = candidate
            new_objective = augmented_objective(problem, new_states, new_controls, theta_star)
            if new_objective <= objective + OBJECTIVE_SLACK * max(1.0, abs(objective)):
                accepted = (new_states, new_controls, new_objective)
                break
        if not finite:
            raise IntentDemoError(
                f"no step in {tuple(step_grid)} yields a finite rollout at iteration {iteration}"
            )
        if accepted is None:
            logger.debug(f"Augmented iLQR iteration {iteration}: no improving step")
            converged = True
            break

        new_states, new_controls, new_objective = accepted
        change = float(np.max(np.abs(new_states - states)))
        logger.debug(
            f"Augmented iLQR iteration {iteration}: step {eta}, objective {new_objective:.6g}, "
            f"change {change:.3e}"
        )
        states, controls, objective = new_states, new_controls, new_objective
        if change < tol:
            converged = True
            break
        iterations += 1

    if not converged:
        logger.warning(f"Augmented iLQR did not converge in {max_iters} iterations")
    logger.info(
        f"Teaching policy objective {objective:.6g} (passive {passive_objective:.6g}, "
        f"{iterations} iterations)"
    )
    teaching = _teaching_stages(reexpress_policies(local_policies, states, [controls], theta_star))
    return TeachingSolution(policies=teaching, states=states, controls=controls,
                            objective=objective, passive_objective=passive_objective,
                            iterations=iterations, converged=converged)


def cost_to_go_jacobian(game: GameDefinition, policies: Sequence[FeedbackPolicyStage],
                        estimator: EstimatorConfig, weights: TeachingWeights, t: int,
                        x0: np.ndarray, nominal_controls: Optional[np.ndarray] = None,
                        step: float = 1e-5) -> np.ndarray:
    """Gradient of the certain player's cost-to-go from stage t in its own controls.

    The state at stage t comes from the complete-information rollout from
    ``x0``; every estimate equals theta* at stage t. The differentiated cost is
    rho1 * c1 + rho2 * c_demo from t to the terminal stage, with the uncertain
    players responding through their policies and updating their estimates.

    Args:
        game: Game the policies were solved on.
        policies: Feedback Nash policies.
        estimator: Belief model of the uncertain players.
        weights: Task and demonstration weights.
        t: First stage of the cost-to-go.
        x0: Initial physical state.
        nominal_controls: u1 at stages t..T-1; defaults to the Nash controls.
        step: Relative central-difference step.

    Returns:
        Flattened gradient of length (T - t) m_1.

    Raises:
        IntentDemoError: If t is not a control stage.
    """
    T = game.dims.T
    if not 0 <= t < T:
        raise IntentDemoError(f"stage {t} out of range for horizon {T}")
    theta_star = np.asarray(weights.theta_star)
    nash_states, nash_controls = rollout_policies(game, policies, x0, theta_star)
    m = game.dims.control_dims[CERTAIN_PLAYER]
    if nominal_controls is None:
        nominal_controls = nash_controls[CERTAIN_PLAYER][t:]
    nominal_controls = np.asarray(nominal_controls, dtype=float).reshape(T - t, m)

    problem = build_augmented_problem(game, policies, belief_gain_schedule(policies, estimator), weights)
    count = problem.num_estimates
    z_t = AugmentedState.uniform(nash_states[t], theta_star, count).as_vector()

    def cost_to_go(flat: np.ndarray) -> float:
        controls = flat.reshape(T - t, m)
        states = _rollout(problem, z_t, controls, start=t)
        if states is None:
            return float('inf')
        return augmented_objective(problem, states, controls, theta_star, start=t)

    gradient = finite_difference_gradient(cost_to_go, nominal_controls.ravel(), step)
    logger.debug(f"Cost-to-go gradient norm at stage {t}: {np.linalg.norm(gradient):.3e}")
    return gradient
