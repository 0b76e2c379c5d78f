"""Shared fixtures for the intentgames test suite."""

from typing import Sequence

import numpy as np
import pytest

from intentgames.core_model import GameDefinition, GameDimensions, LinearStage, QuadraticCostStage


def random_lq_game(rng: np.random.Generator, n: int = 2, control_dims: Sequence[int] = (1, 1),
                   p: int = 1, T: int = 4, bound: float = 50.0) -> GameDefinition:
    """Random well-posed LQ game; only player 0's cost depends on the intent."""
    dims = GameDimensions(n=n, control_dims=tuple(control_dims), p=p, T=T)
    A = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    B = tuple(0.5 * rng.standard_normal((n, m)) for m in control_dims)
    stages = [LinearStage(A=A, B=B, d=0.1 * rng.standard_normal(n)) for _ in range(T)]

    def cost(player: int, terminal: bool) -> QuadraticCostStage:
        M = rng.standard_normal((n, n))
        Q = 0.5 * (M @ M.T) / n + 0.1 * np.eye(n)
        L_theta = rng.standard_normal((n, p)) if player == 0 else None
        if terminal:
            return QuadraticCostStage(Q=Q, ell0=rng.standard_normal(n), L_theta=L_theta)
        m = control_dims[player]
        W = rng.standard_normal((m, m))
        R = np.eye(m) + 0.1 * (W @ W.T)
        return QuadraticCostStage(Q=Q, R=R, ell0=rng.standard_normal(n), L_theta=L_theta,
                                  r=0.1 * rng.standard_normal(m))

    costs = [tuple(cost(i, t == T) for i in range(len(control_dims))) for t in range(T + 1)]
    return GameDefinition(dims=dims, intent_lower=-bound, intent_upper=bound,
                          linear_stages=tuple(stages), cost_stages=tuple(costs))


def scalar_game(T: int = 1, q: Sequence[float] = (1.0, 1.0), r: Sequence[float] = (1.0, 1.0),
                b: Sequence[float] = (1.0, 1.0), track_intent: bool = True) -> GameDefinition:
    """x' = x + b1 u1 + b2 u2; player 0 pays q0 (x - theta)^2 up to a constant."""
    dims = GameDimensions(n=1, control_dims=(1, 1), p=1, T=T)
    stage = LinearStage(A=np.eye(1), B=(np.array([[b[0]]]), np.array([[b[1]]])))

    def cost(player: int, terminal: bool) -> QuadraticCostStage:
        L_theta = np.array([[-2.0 * q[0]]]) if player == 0 and track_intent else None
        R = None if terminal else np.array([[r[player]]])
        return QuadraticCostStage(Q=np.array([[q[player]]]), R=R, L_theta=L_theta)

    costs = [tuple(cost(i, t == T) for i in range(2)) for t in range(T + 1)]
    return GameDefinition(dims=dims, intent_lower=-10.0, intent_upper=10.0,
                          linear_stages=(stage,) * T, cost_stages=tuple(costs))


def symmetric_lq_game(rng: np.random.Generator, n: int = 2, T: int = 4) -> GameDefinition:
    """Three-player LQ game whose two uncertain players share inputs and costs."""
    dims = GameDimensions(n=n, control_dims=(1, 1, 1), p=1, T=T)
    A = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    B_certain, B_uncertain = 0.5 * rng.standard_normal((n, 1)), 0.5 * rng.standard_normal((n, 1))
    stage = LinearStage(A=A, B=(B_certain, B_uncertain, B_uncertain))

    def psd() -> np.ndarray:
        M = rng.standard_normal((n, n))
        return 0.5 * (M @ M.T) / n + 0.1 * np.eye(n)

    costs = []
    for t in range(T + 1):
        R = None if t == T else np.eye(1)
        certain = QuadraticCostStage(Q=psd(), R=R, L_theta=rng.standard_normal((n, 1)))
        uncertain = QuadraticCostStage(Q=psd(), R=R)
        costs.append((certain, uncertain, uncertain))
    return GameDefinition(dims=dims, intent_lower=-50.0, intent_upper=50.0,
                          linear_stages=(stage,) * T, cost_stages=tuple(costs))


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240601)
