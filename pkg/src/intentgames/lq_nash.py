"""Feedback Nash equilibria of finite-horizon LQ games with intent-affine policies.

The recursion follows the stacked coupled-Riccati form: at every stage the
players' state gains solve one block-linear system, and the same factorization
is reused for the affine part, whose right-hand side has one column for the
intent-free term and one column per intent coordinate.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from .core_model import (
    GameDefinition,
    LinearStage,
    QuadraticCostStage,
    _frozen,
)


logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


class NashSolverError(Exception):
    """Exception raised for feedback Nash solver failures."""
    pass


class DegenerateGameError(NashSolverError):
    """Exception raised when the stacked gain system is singular."""
    pass


@dataclass(frozen=True)
class PlayerPolicy:
    """Affine policy u = -K_x x - K_theta theta - k of one player at one stage."""
    K_x: np.ndarray
    K_theta: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'K_x', _frozen(np.atleast_2d(self.K_x)))
        object.__setattr__(self, 'K_theta', _frozen(np.atleast_2d(self.K_theta)))
        object.__setattr__(self, 'k', _frozen(np.atleast_1d(self.k)))

    @property
    def theta_jacobian(self) -> np.ndarray:
        """Derivative of the control with respect to the intent."""
        return -np.asarray(self.K_theta)

    def act(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return -(self.K_x @ x) - (self.K_theta @ theta) - self.k


@dataclass(frozen=True)
class FeedbackPolicyStage:
    """Policies of all players at one stage, certain player first."""
    players: Tuple[PlayerPolicy, ...]

    def __getitem__(self, player: int) -> PlayerPolicy:
        return self.players[player]

    def __len__(self) -> int:
        return len(self.players)


@dataclass(frozen=True)
class PlayerValue:
    """Value x'Zx + (zeta0 + Zeta_theta theta)'x + [1; theta]' C [1; theta]."""
    Z: np.ndarray
    zeta0: np.ndarray
    Zeta_theta: np.ndarray
    constant: np.ndarray

    def evaluate(self, x: np.ndarray, theta: np.ndarray) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lifted = np.concatenate(([1.0], theta))
        zeta = self.zeta0 + self.Zeta_theta @ theta
        return float(x @ self.Z @ x + zeta @ x + lifted @ self.constant @ lifted)


@dataclass(frozen=True)
class ValueStage:
    players: Tuple[PlayerValue, ...]

    def __getitem__(self, player: int) -> PlayerValue:
        return self.players[player]


def _lifted(vector: np.ndarray, p: int) -> np.ndarray:
    """Column block [vector | 0] representing an intent-independent vector."""
    return np.hstack([np.asarray(vector, dtype=float).reshape(-1, 1), np.zeros((len(vector), p))])


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def backward_pass(stages: Sequence[LinearStage],
                  costs: Sequence[Sequence[QuadraticCostStage]],
                  p: int) -> Tuple[List[FeedbackPolicyStage], List[ValueStage]]:
    """Coupled backward recursion for any number of players.

    Args:
        stages: T affine dynamics stages.
        costs: T + 1 tuples of per-player cost stages; the last is terminal.
        p: Intent dimension.

    Returns:
        T policy stages and T + 1 value stages.

    Raises:
        DegenerateGameError: If a stage's stacked gain system is singular.
    """
    T = len(stages)
    num_players = len(costs[0])
    terminal = costs[T]
    n = terminal[0].Q.shape[0]

    Z = [np.array(c.Q) for c in terminal]
    Zeta = [np.hstack([c.ell0.reshape(-1, 1), c.intent_matrix(p)]) for c in terminal]
    C = [np.zeros((1 + p, 1 + p)) for _ in range(num_players)]

    def snapshot() -> ValueStage:
        return ValueStage(players=tuple(
            PlayerValue(Z=_frozen(Z[i]), zeta0=_frozen(Zeta[i][:, 0]),
                        Zeta_theta=_frozen(Zeta[i][:, 1:]), constant=_frozen(C[i]))
            for i in range(num_players)
        ))

    values = [snapshot()]
    policies: List[FeedbackPolicyStage] = []

    for t in range(T - 1, -1, -1):
        stage = stages[t]
        A, B, d = np.asarray(stage.A), [np.asarray(b) for b in stage.B], np.asarray(stage.d)
        stage_costs = costs[t]
        dims = [b.shape[1] for b in B]
        splits = np.cumsum(dims)[:-1]

        rows = []
        for i in range(num_players):
            BtZ = B[i].T @ Z[i]
            blocks = [BtZ @ B[j] for j in range(num_players)]
            blocks[i] = blocks[i] + stage_costs[i].R
            rows.append(np.hstack(blocks))
        S = np.vstack(rows)

        condition = np.linalg.cond(S)
        if not np.isfinite(condition) or condition > CONDITION_LIMIT:
            raise DegenerateGameError(
                f"FNE degenerate or non-unique at stage {t} (condition number {condition:.3g})"
            )
        factor = linalg.lu_factor(S)

        d_lifted = _lifted(d, p)
        r_lifted = [_lifted(stage_costs[i].r, p) for i in range(num_players)]
        Y = np.vstack([B[i].T @ Z[i] @ A for i in range(num_players)])
        Y_affine = np.vstack([
            B[i].T @ Z[i] @ d_lifted + 0.5 * (B[i].T @ Zeta[i] + r_lifted[i])
            for i in range(num_players)
        ])
        P = np.split(linalg.lu_solve(factor, Y), splits, axis=0)
        alpha = np.split(linalg.lu_solve(factor, Y_affine), splits, axis=0)

        F = A - sum(B[j] @ P[j] for j in range(num_players))
        beta = d_lifted - sum(B[j] @ alpha[j] for j in range(num_players))

        next_Z, next_Zeta, next_C = [], [], []
        for i in range(num_players):
            cost = stage_costs[i]
            R = np.asarray(cost.R)
            L = np.hstack([cost.ell0.reshape(-1, 1), cost.intent_matrix(p)])
            next_Z.append(_sym(cost.Q + P[i].T @ R @ P[i] + F.T @ Z[i] @ F))
            next_Zeta.append(
                L + 2.0 * P[i].T @ R @ alpha[i] - P[i].T @ r_lifted[i]
                + 2.0 * F.T @ Z[i] @ beta + F.T @ Zeta[i]
            )
            next_C.append(
                C[i] + alpha[i].T @ R @ alpha[i] - _sym(r_lifted[i].T @ alpha[i])
                + beta.T @ Z[i] @ beta + _sym(Zeta[i].T @ beta)
            )
        Z, Zeta, C = next_Z, next_Zeta, next_C

        policies.append(FeedbackPolicyStage(players=tuple(
            PlayerPolicy(K_x=P[i], K_theta=alpha[i][:, 1:], k=alpha[i][:, 0])
            for i in range(num_players)
        )))
        values.append(snapshot())

        if not all(np.all(np.isfinite(P[i])) and np.all(np.isfinite(alpha[i]))
                   for i in range(num_players)):
            raise NashSolverError(f"non-finite gains at stage {t}")

    policies.reverse()
    values.reverse()
    return policies, values


def solve_feedback_nash(game: GameDefinition) -> Tuple[List[FeedbackPolicyStage], List[ValueStage]]:
    """Feedback Nash equilibrium of a linear-quadratic game.

    Args:
        game: Linear game definition.

    Returns:
        T policy stages (affine in state and intent) and T + 1 value stages.

    Raises:
        NashSolverError: If the game is not linear-quadratic.
        DegenerateGameError: If the equilibrium is degenerate or non-unique.
    """
    if not game.is_linear:
        raise NashSolverError("solve_feedback_nash needs a linear-quadratic game")
    policies, values = backward_pass(game.linear_stages, game.cost_stages, game.dims.p)
    logger.debug(f"Solved LQ game: N={game.dims.num_players}, n={game.dims.n}, T={game.dims.T}")
    return policies, values


def policy_response(policies: Sequence[FeedbackPolicyStage], t: int, x: np.ndarray,
                    theta: np.ndarray) -> List[np.ndarray]:
    """Controls of all players at stage t when everyone plays under intent theta."""
    if not 0 <= t < len(policies):
        raise NashSolverError(f"stage {t} out of range for horizon {len(policies)}")
    x = np.asarray(x, dtype=float)
    return [policy.act(x, theta) for policy in policies[t].players]


def rollout_policies(game: GameDefinition, policies: Sequence[FeedbackPolicyStage],
                     x0: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Closed-loop trajectory when every player plays its policy under ``theta``.

    Returns:
        States of shape (T + 1, n) and per-player controls of shape (T, m_i).
    """
    T = game.dims.T
    states = np.zeros((T + 1, game.dims.n))
    controls = [np.zeros((T, m)) for m in game.dims.control_dims]
    states[0] = x0
    for t in range(T):
        us = policy_response(policies, t, states[t], theta)
        for i, u in enumerate(us):
            controls[i][t] = u
        states[t + 1] = game.transition(t, states[t], us)
    return states, controls
