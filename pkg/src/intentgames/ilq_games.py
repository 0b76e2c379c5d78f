"""Iterative LQ approximation of feedback Nash equilibria in nonlinear games."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core_model import (
    GameDefinition,
    linearize,
    quadraticize,
    quadraticize_terminal,
    rollout_open_loop,
)
from .lq_nash import FeedbackPolicyStage, PlayerPolicy, backward_pass


logger = logging.getLogger(__name__)

DEFAULT_STEP_GRID = (1.0, 0.5, 0.25, 0.1, 0.01)
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITERS = 50


class ILQDivergenceError(Exception):
    """Exception raised when no line-search step yields a finite rollout."""
    pass


@dataclass
class IterationState:
    """Nominal trajectory and bookkeeping of the iLQ solver.

    Attributes:
        states: Nominal states, shape (T + 1, n).
        controls: Nominal per-player controls, shape (T, m_i) each.
        policies: Affine policies about the nominal.
        iterations: Number of iterations that moved the nominal by at least tol.
        last_change: Max-norm state change of the last iteration.
        converged: Whether the last change fell below tol.
    """
    states: np.ndarray
    controls: List[np.ndarray]
    policies: List[FeedbackPolicyStage]
    iterations: int = 0
    last_change: float = float('inf')
    converged: bool = False


@dataclass
class ILQSolution:
    state: IterationState
    policies: List[FeedbackPolicyStage]

    @property
    def converged(self) -> bool:
        return self.state.converged


def local_lq_game(game: GameDefinition, states: np.ndarray, controls: Sequence[np.ndarray],
                  theta: np.ndarray):
    """Linearized dynamics and quadraticized costs about a nominal trajectory."""
    T = game.horizon
    stages, costs = [], []
    for t in range(T):
        stage = game.nonlinear_stages[t]
        us = [u[t] for u in controls]
        stages.append(linearize(stage, states[t], us))
        costs.append(quadraticize(stage, states[t], us, theta))
    costs.append(quadraticize_terminal(game.terminal, states[T], theta))
    return stages, costs


def rollout_about_nominal(game: GameDefinition, x0: np.ndarray, states: np.ndarray,
                          controls: Sequence[np.ndarray], policies: Sequence[FeedbackPolicyStage],
                          theta: np.ndarray, eta: float) -> Optional[Tuple[np.ndarray, List[np.ndarray]]]:
    """Roll out u = u_bar - K_x (x - x_bar) - eta * (u_bar - pi(x_bar)) about a nominal.

    Returns None as soon as a state leaves the game's bounds or stops being finite.
    """
    T = game.horizon
    new_states = np.zeros_like(states)
    new_controls = [np.zeros_like(u) for u in controls]
    new_states[0] = x0
    for t in range(T):
        x, x_bar = new_states[t], states[t]
        us = []
        for i, policy in enumerate(policies[t].players):
            u_bar = controls[i][t]
            feedforward = u_bar - policy.act(x_bar, theta)
            us.append(u_bar - policy.K_x @ (x - x_bar) - eta * feedforward)
        for i, u in enumerate(us):
            new_controls[i][t] = u
        x_next = game.transition(t, x, us)
        if not game.within_bounds(t, x_next):
            return None
        new_states[t + 1] = x_next
    return new_states, new_controls


def reexpress_policies(policies: Sequence[FeedbackPolicyStage], states: np.ndarray,
                       controls: Sequence[np.ndarray], theta: np.ndarray) -> List[FeedbackPolicyStage]:
    """Shift feedforward terms so the policies reproduce the given nominal at ``theta``."""
    result = []
    for t, stage in enumerate(policies):
        players = []
        for i, policy in enumerate(stage.players):
            k = -controls[i][t] - policy.K_x @ states[t] - policy.K_theta @ theta
            players.append(PlayerPolicy(K_x=policy.K_x, K_theta=policy.K_theta, k=k))
        result.append(FeedbackPolicyStage(players=tuple(players)))
    return result


def solve_ilq(game: GameDefinition, theta: np.ndarray, x0: np.ndarray,
              initial_controls: Optional[Sequence[np.ndarray]] = None,
              max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
              step_grid: Sequence[float] = DEFAULT_STEP_GRID) -> ILQSolution:
    """Approximate feedback Nash equilibrium by iterated local LQ games.

    Args:
        game: Game to solve; a linear-quadratic game is wrapped as nonlinear.
        theta: Intent at which the costs are evaluated.
        x0: Initial state.
        initial_controls: Per-player warm start of shape (T, m_i); zeros if None.
        max_iters: Iteration budget.
        tol: Max-norm trajectory change that counts as converged.
        step_grid: Feedforward scalings tried from first to last.

    Returns:
        ILQSolution whose policies are affine in state and intent about the
        final nominal.

    Raises:
        ILQDivergenceError: If no step in ``step_grid`` keeps the rollout finite.
        ValueError: On invalid arguments.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be at least 1, got {max_iters}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    game = game.as_nonlinear()
    dims = game.dims
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x0 = np.asarray(x0, dtype=float)

    if initial_controls is None:
        controls = [np.zeros((dims.T, m)) for m in dims.control_dims]
    else:
        controls = [np.array(u, dtype=float).reshape(dims.T, m)
                    for u, m in zip(initial_controls, dims.control_dims)]
        if len(controls) != dims.num_players:
            raise ValueError(f"initial controls given for {len(controls)} of {dims.num_players} players")
    states = rollout_open_loop(game, x0, controls)
    if not np.all(np.isfinite(states)):
        raise ILQDivergenceError("initial rollout is not finite (iteration 0)")

    state = IterationState(states=states, controls=controls, policies=[])
    for iteration in range(1, max_iters + 1):
        stages, costs = local_lq_game(game, state.states, state.controls, theta)
        policies, _ = backward_pass(stages, costs, dims.p)

        for eta in step_grid:
            candidate = rollout_about_nominal(
                game, x0, state.states, state.controls, policies, theta, eta)
            if candidate is not None:
                break
        else:
            raise ILQDivergenceError(
                f"no step in {tuple(step_grid)} yields a finite rollout at iteration {iteration}"
            )

        new_states, new_controls = candidate
        change = float(np.max(np.abs(new_states - state.states)))
        logger.debug(f"iLQ iteration {iteration}: step {eta}, trajectory change {change:.3e}")
        state.states, state.controls, state.policies = new_states, new_controls, policies
        state.last_change = change
        if change < tol:
            state.converged = True
            break
        state.iterations += 1

    if state.converged:
        logger.info(f"iLQ converged after {state.iterations} iterations")
    else:
        logger.warning(
            f"iLQ did not converge in {max_iters} iterations (last change {state.last_change:.3e})"
        )
    # the loop's last gains were solved about the previous nominal
    stages, costs = local_lq_game(game, state.states, state.controls, theta)
    policies, _ = backward_pass(stages, costs, dims.p)
    state.policies = reexpress_policies(policies, state.states, state.controls, theta)
    return ILQSolution(state=state, policies=state.policies)
