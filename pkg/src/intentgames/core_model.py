"""Game model: dimensions, stages, intent-parameterized costs and local approximations."""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger(__name__)

# Player 0 knows the intent; every other player estimates it.
CERTAIN_PLAYER = 0

SYMMETRY_TOL = 1e-12
Q_EIGENVALUE_TOL = -1e-10
R_EIGENVALUE_MIN = 1e-10
HESSIAN_FLOOR = 1e-8
FD_STEP = 1e-6
FD_HESSIAN_STEP = 1e-4

TransitionFn = Callable[[np.ndarray, Sequence[np.ndarray]], np.ndarray]
JacobianFn = Callable[[np.ndarray, Sequence[np.ndarray]], Tuple[np.ndarray, List[np.ndarray]]]
StageCostFn = Callable[[np.ndarray, np.ndarray, np.ndarray], float]
TerminalCostFn = Callable[[np.ndarray, np.ndarray], float]


class GameModelError(Exception):
    """Exception raised for invalid game definitions or evaluation failures."""
    pass


class DimensionError(GameModelError):
    """Exception raised when an array shape disagrees with the game dimensions."""
    pass


def _frozen(value, dtype=float) -> np.ndarray:
    """Copy ``value`` into a read-only float array."""
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _check_shape(array: np.ndarray, shape: Tuple[int, ...], what: str) -> None:
    if array.shape != shape:
        raise DimensionError(f"{what}: expected shape {shape}, got {array.shape}")


@dataclass(frozen=True)
class GameDimensions:
    """Sizes shared by every stage of a game.

    Attributes:
        n: State dimension.
        control_dims: Control dimension of each player, certain player first.
        p: Intent-parameter dimension.
        T: Number of control stages.
    """
    n: int
    control_dims: Tuple[int, ...]
    p: int
    T: int

    def __post_init__(self):
        object.__setattr__(self, 'control_dims', tuple(int(m) for m in self.control_dims))
        if self.n <= 0 or self.p <= 0 or self.T < 1:
            raise GameModelError(
                f"dimensions must be positive (n={self.n}, p={self.p}, T={self.T})"
            )
        if len(self.control_dims) < 2:
            raise GameModelError(f"a game needs at least two players, got {len(self.control_dims)}")
        if any(m <= 0 for m in self.control_dims):
            raise GameModelError(f"control dimensions must be positive: {self.control_dims}")

    @property
    def num_players(self) -> int:
        return len(self.control_dims)

    @property
    def uncertain_players(self) -> List[int]:
        return [i for i in range(self.num_players) if i != CERTAIN_PLAYER]


@dataclass(frozen=True)
class LinearStage:
    """Affine dynamics x' = A x + sum_i B_i u_i + d."""
    A: np.ndarray
    B: Tuple[np.ndarray, ...]
    d: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _frozen(self.A)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', tuple(_frozen(np.atleast_2d(b)) for b in self.B))
        drift = np.zeros(A.shape[0]) if self.d is None else self.d
        object.__setattr__(self, 'd', _frozen(drift))

    def validate(self, dims: GameDimensions, t: int) -> None:
        _check_shape(self.A, (dims.n, dims.n), f"stage {t} A")
        if len(self.B) != dims.num_players:
            raise DimensionError(
                f"stage {t}: expected {dims.num_players} input matrices, got {len(self.B)}"
            )
        for i, (B, m) in enumerate(zip(self.B, dims.control_dims)):
            _check_shape(B, (dims.n, m), f"stage {t} B[{i}]")
        _check_shape(self.d, (dims.n,), f"stage {t} d")

    def step(self, x: np.ndarray, controls: Sequence[np.ndarray]) -> np.ndarray:
        x_next = self.A @ x + self.d
        for B, u in zip(self.B, controls):
            x_next = x_next + B @ u
        return x_next


@dataclass(frozen=True)
class QuadraticCostStage:
    """One player's stage cost x'Qx + (ell0 + L_theta theta)'x + u'Ru + r'u.

    ``R`` and ``r`` are absent on the terminal stage. ``L_theta`` defaults to
    zero, which is the case for every uncertain player.
    """
    Q: np.ndarray
    R: Optional[np.ndarray] = None
    ell0: Optional[np.ndarray] = None
    L_theta: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = _frozen(np.atleast_2d(self.Q))
        n = Q.shape[0]
        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'ell0', _frozen(np.zeros(n) if self.ell0 is None else self.ell0))
        if self.L_theta is not None:
            object.__setattr__(self, 'L_theta', _frozen(np.atleast_2d(self.L_theta).reshape(n, -1)))
        if self.R is not None:
            R = _frozen(np.atleast_2d(self.R))
            object.__setattr__(self, 'R', R)
            object.__setattr__(
                self, 'r', _frozen(np.zeros(R.shape[0]) if self.r is None else self.r)
            )

    @property
    def is_terminal(self) -> bool:
        return self.R is None

    def intent_matrix(self, p: int) -> np.ndarray:
        """L_theta as an n x p array (zeros when not set)."""
        if self.L_theta is None:
            return np.zeros((self.Q.shape[0], p))
        return np.asarray(self.L_theta)

    def linear_term(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.ell0 + self.intent_matrix(theta.size) @ theta

    def value(self, x: np.ndarray, u: Optional[np.ndarray], theta: np.ndarray) -> float:
        cost = float(x @ self.Q @ x + self.linear_term(theta) @ x)
        if self.R is not None and u is not None:
            cost += float(u @ self.R @ u + self.r @ u)
        return cost

    def validate(self, dims: GameDimensions, t: int, player: int, terminal: bool) -> None:
        where = f"stage {t} player {player}"
        _check_shape(self.Q, (dims.n, dims.n), f"{where} Q")
        _check_shape(self.ell0, (dims.n,), f"{where} ell0")
        _check_shape(self.intent_matrix(dims.p), (dims.n, dims.p), f"{where} L_theta")
        scale = max(1.0, float(np.abs(self.Q).max()))
        if np.abs(self.Q - self.Q.T).max() > SYMMETRY_TOL * scale:
            raise GameModelError(f"{where}: Q is not symmetric")
        if np.linalg.eigvalsh(self.Q).min() < Q_EIGENVALUE_TOL:
            raise GameModelError(f"{where}: Q is not positive semidefinite")
        if player != CERTAIN_PLAYER and np.any(self.intent_matrix(dims.p) != 0.0):
            raise GameModelError(f"{where}: only the certain player's cost may depend on the intent")
        if terminal:
            return
        if self.R is None:
            raise GameModelError(f"{where}: running cost stage needs a control cost R")
        m = dims.control_dims[player]
        _check_shape(self.R, (m, m), f"{where} R")
        _check_shape(self.r, (m,), f"{where} r")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() < R_EIGENVALUE_MIN:
            raise GameModelError(f"{where}: R is not positive definite")


@dataclass(frozen=True)
class CostDerivatives:
    """First and second derivatives of a stage cost at a point."""
    gx: np.ndarray
    Hxx: np.ndarray
    gu: Optional[np.ndarray] = None
    Huu: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NonlinearStage:
    """Differentiable dynamics and per-player costs c_i(x, u_i, theta) of one stage.

    ``jacobian`` and ``cost_derivatives`` are optional; missing derivatives are
    obtained by central finite differences.
    """
    transition: TransitionFn
    costs: Tuple[StageCostFn, ...]
    jacobian: Optional[JacobianFn] = None
    cost_derivatives: Optional[Tuple[Callable[..., CostDerivatives], ...]] = None
    state_lower: Optional[np.ndarray] = None
    state_upper: Optional[np.ndarray] = None

    def within_bounds(self, x: np.ndarray) -> bool:
        if not np.all(np.isfinite(x)):
            return False
        if self.state_lower is not None and np.any(x < self.state_lower):
            return False
        if self.state_upper is not None and np.any(x > self.state_upper):
            return False
        return True


@dataclass(frozen=True)
class TerminalCost:
    """Per-player terminal costs c_i(x, theta) of a nonlinear game."""
    costs: Tuple[TerminalCostFn, ...]
    derivatives: Optional[Tuple[Callable[..., CostDerivatives], ...]] = None


@dataclass(frozen=True)
class GameDefinition:
    """Complete game: dimensions, stages and the box of admissible intents.

    Exactly one of the two stage representations is populated: ``linear_stages``
    with ``cost_stages`` (T + 1 entries, the last terminal), or
    ``nonlinear_stages`` with ``terminal``.
    """
    dims: GameDimensions
    intent_lower: np.ndarray
    intent_upper: np.ndarray
    linear_stages: Tuple[LinearStage, ...] = ()
    cost_stages: Tuple[Tuple[QuadraticCostStage, ...], ...] = ()
    nonlinear_stages: Tuple[NonlinearStage, ...] = ()
    terminal: Optional[TerminalCost] = None

    def __post_init__(self):
        dims = self.dims
        object.__setattr__(self, 'intent_lower', _frozen(np.broadcast_to(self.intent_lower, (dims.p,))))
        object.__setattr__(self, 'intent_upper', _frozen(np.broadcast_to(self.intent_upper, (dims.p,))))
        object.__setattr__(self, 'linear_stages', tuple(self.linear_stages))
        object.__setattr__(self, 'cost_stages', tuple(tuple(c) for c in self.cost_stages))
        object.__setattr__(self, 'nonlinear_stages', tuple(self.nonlinear_stages))
        if np.any(self.intent_lower > self.intent_upper):
            raise GameModelError("intent lower bound exceeds upper bound")

        if self.linear_stages and self.nonlinear_stages:
            raise GameModelError("a game is either linear-quadratic or nonlinear, not both")
        if self.linear_stages:
            if len(self.linear_stages) != dims.T:
                raise GameModelError(f"expected {dims.T} linear stages, got {len(self.linear_stages)}")
            if len(self.cost_stages) != dims.T + 1:
                raise GameModelError(
                    f"expected {dims.T + 1} cost stages (incl. terminal), got {len(self.cost_stages)}"
                )
            for t, stage in enumerate(self.linear_stages):
                stage.validate(dims, t)
            for t, costs in enumerate(self.cost_stages):
                if len(costs) != dims.num_players:
                    raise GameModelError(
                        f"stage {t}: expected {dims.num_players} cost stages, got {len(costs)}"
                    )
                for i, cost in enumerate(costs):
                    cost.validate(dims, t, i, terminal=(t == dims.T))
        elif self.nonlinear_stages:
            if len(self.nonlinear_stages) != dims.T:
                raise GameModelError(
                    f"expected {dims.T} nonlinear stages, got {len(self.nonlinear_stages)}"
                )
            if self.terminal is None or len(self.terminal.costs) != dims.num_players:
                raise GameModelError("nonlinear game needs one terminal cost per player")
            for t, stage in enumerate(self.nonlinear_stages):
                if len(stage.costs) != dims.num_players:
                    raise GameModelError(
                        f"stage {t}: expected {dims.num_players} costs, got {len(stage.costs)}"
                    )
        else:
            raise GameModelError("game has no stages")

    @property
    def is_linear(self) -> bool:
        return bool(self.linear_stages)

    @property
    def horizon(self) -> int:
        return self.dims.T

    def transition(self, t: int, x: np.ndarray, controls: Sequence[np.ndarray]) -> np.ndarray:
        if self.is_linear:
            return self.linear_stages[t].step(x, controls)
        return np.asarray(self.nonlinear_stages[t].transition(x, controls), dtype=float)

    def stage_cost(self, t: int, player: int, x: np.ndarray, u: np.ndarray,
                   theta: np.ndarray) -> float:
        if self.is_linear:
            return self.cost_stages[t][player].value(x, u, theta)
        return float(self.nonlinear_stages[t].costs[player](x, u, theta))

    def terminal_cost(self, player: int, x: np.ndarray, theta: np.ndarray) -> float:
        if self.is_linear:
            return self.cost_stages[self.dims.T][player].value(x, None, theta)
        return float(self.terminal.costs[player](x, theta))

    def within_bounds(self, t: int, x: np.ndarray) -> bool:
        if self.is_linear:
            return bool(np.all(np.isfinite(x)))
        return self.nonlinear_stages[min(t, self.dims.T - 1)].within_bounds(x)

    def clip_intent(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.intent_lower, self.intent_upper)

    def as_nonlinear(self) -> 'GameDefinition':
        """Wrap a linear-quadratic game as a nonlinear one with analytic derivatives."""
        if not self.is_linear:
            return self
        stages = []
        for t, lin in enumerate(self.linear_stages):
            costs = self.cost_stages[t]
            stages.append(NonlinearStage(
                transition=lin.step,
                costs=tuple(partial(_quadratic_value, c) for c in costs),
                jacobian=partial(_linear_jacobian, lin),
                cost_derivatives=tuple(partial(_quadratic_derivatives, c) for c in costs),
            ))
        final = self.cost_stages[self.dims.T]
        terminal = TerminalCost(
            costs=tuple(partial(_quadratic_terminal_value, c) for c in final),
            derivatives=tuple(partial(_quadratic_terminal_derivatives, c) for c in final),
        )
        return GameDefinition(
            dims=self.dims,
            intent_lower=self.intent_lower,
            intent_upper=self.intent_upper,
            nonlinear_stages=tuple(stages),
            terminal=terminal,
        )


def _linear_jacobian(stage: LinearStage, x, controls):
    return np.asarray(stage.A), [np.asarray(B) for B in stage.B]


def _quadratic_value(cost: QuadraticCostStage, x, u, theta) -> float:
    return cost.value(x, u, theta)


def _quadratic_terminal_value(cost: QuadraticCostStage, x, theta) -> float:
    return cost.value(x, None, theta)


def _quadratic_derivatives(cost: QuadraticCostStage, x, u, theta) -> CostDerivatives:
    return CostDerivatives(
        gx=2.0 * cost.Q @ x + cost.linear_term(theta),
        Hxx=2.0 * np.asarray(cost.Q),
        gu=2.0 * cost.R @ u + cost.r,
        Huu=2.0 * np.asarray(cost.R),
    )


def _quadratic_terminal_derivatives(cost: QuadraticCostStage, x, theta) -> CostDerivatives:
    return CostDerivatives(gx=2.0 * cost.Q @ x + cost.linear_term(theta), Hxx=2.0 * np.asarray(cost.Q))


def finite_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], point: np.ndarray,
                               step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``func`` at ``point``.

    The step on coordinate j is ``step * (1 + |point[j]|)``.
    """
    point = np.asarray(point, dtype=float)
    f0 = np.atleast_1d(np.asarray(func(point), dtype=float))
    jacobian = np.zeros((f0.size, point.size))
    for j in range(point.size):
        h = step * (1.0 + abs(point[j]))
        plus = point.copy()
        minus = point.copy()
        plus[j] += h
        minus[j] -= h
        diff = np.atleast_1d(func(plus)) - np.atleast_1d(func(minus))
        jacobian[:, j] = diff / (2.0 * h)
    return jacobian


def finite_difference_gradient(func: Callable[[np.ndarray], float], point: np.ndarray,
                               step: float = FD_STEP) -> np.ndarray:
    return finite_difference_jacobian(lambda z: np.atleast_1d(func(z)), point, step)[0]


def _raise_if_not_finite(matrix: np.ndarray, what: str) -> None:
    bad = np.argwhere(~np.isfinite(np.atleast_2d(matrix)))
    if bad.size:
        row, col = bad[0]
        raise GameModelError(f"non-finite derivative in {what} at coordinate ({row}, {col})")


def linearize(stage: NonlinearStage, x: np.ndarray, controls: Sequence[np.ndarray]) -> LinearStage:
    """Affine approximation of ``stage.transition`` about (x, controls).

    Args:
        stage: Stage to linearize.
        x: State linearization point.
        controls: One control vector per player.

    Returns:
        LinearStage with A = df/dx, B_i = df/du_i and the drift
        d = f(x, u) - A x - sum_i B_i u_i.

    Raises:
        GameModelError: If a derivative is not finite.
    """
    x = np.asarray(x, dtype=float)
    controls = [np.atleast_1d(np.asarray(u, dtype=float)) for u in controls]
    if stage.jacobian is not None:
        A, Bs = stage.jacobian(x, controls)
        A = np.asarray(A, dtype=float)
        Bs = [np.atleast_2d(np.asarray(B, dtype=float)) for B in Bs]
    else:
        A = finite_difference_jacobian(lambda z: stage.transition(z, controls), x)
        Bs = []
        for i, u in enumerate(controls):
            def along_u(v, i=i):
                perturbed = list(controls)
                perturbed[i] = v
                return stage.transition(x, perturbed)
            Bs.append(finite_difference_jacobian(along_u, u))

    _raise_if_not_finite(A, "df/dx")
    for i, B in enumerate(Bs):
        _raise_if_not_finite(B, f"df/du[{i}]")

    f0 = np.asarray(stage.transition(x, controls), dtype=float)
    d = f0 - A @ x - sum(B @ u for B, u in zip(Bs, controls))
    return LinearStage(A=A, B=tuple(Bs), d=d)


def _floor_eigenvalues(Q: np.ndarray, floor: float = HESSIAN_FLOOR) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(Q)
    if eigenvalues.min() >= floor:
        return Q
    return (vectors * np.maximum(eigenvalues, floor)) @ vectors.T


def _symmetrize(H: np.ndarray) -> np.ndarray:
    return 0.5 * (H + H.T)


def stage_cost_derivatives(stage: NonlinearStage, player: int, x, u, theta) -> CostDerivatives:
    if stage.cost_derivatives is not None:
        return stage.cost_derivatives[player](x, u, theta)
    cost = stage.costs[player]
    grad_x = partial(finite_difference_gradient, lambda z: cost(z, u, theta))
    grad_u = partial(finite_difference_gradient, lambda v: cost(x, v, theta))
    return CostDerivatives(
        gx=grad_x(x),
        Hxx=finite_difference_jacobian(
            lambda z: finite_difference_gradient(lambda w: cost(w, u, theta), z), x, FD_HESSIAN_STEP),
        gu=grad_u(u),
        Huu=finite_difference_jacobian(
            lambda v: finite_difference_gradient(lambda w: cost(x, w, theta), v), u, FD_HESSIAN_STEP),
    )


def terminal_cost_derivatives(terminal: TerminalCost, player: int, x, theta) -> CostDerivatives:
    if terminal.derivatives is not None:
        return terminal.derivatives[player](x, theta)
    cost = terminal.costs[player]
    return CostDerivatives(
        gx=finite_difference_gradient(lambda z: cost(z, theta), x),
        Hxx=finite_difference_jacobian(
            lambda z: finite_difference_gradient(lambda w: cost(w, theta), z), x, FD_HESSIAN_STEP),
    )


def _absolute_quadratic(derivs: CostDerivatives, gx_of_theta: Callable[[np.ndarray], np.ndarray],
                        x: np.ndarray, u: Optional[np.ndarray], theta: np.ndarray,
                        what: str) -> QuadraticCostStage:
    _raise_if_not_finite(derivs.Hxx, f"{what} Hessian in x")
    Q = _floor_eigenvalues(_symmetrize(0.5 * np.asarray(derivs.Hxx, dtype=float)))
    L_theta = finite_difference_jacobian(gx_of_theta, theta)
    _raise_if_not_finite(L_theta, f"{what} intent coupling")
    ell = np.asarray(derivs.gx, dtype=float) - 2.0 * Q @ x
    ell0 = ell - L_theta @ theta
    if u is None:
        return QuadraticCostStage(Q=Q, ell0=ell0, L_theta=L_theta)
    _raise_if_not_finite(derivs.Huu, f"{what} Hessian in u")
    R = _symmetrize(0.5 * np.atleast_2d(np.asarray(derivs.Huu, dtype=float)))
    r = np.asarray(derivs.gu, dtype=float) - 2.0 * R @ u
    return QuadraticCostStage(Q=Q, R=R, ell0=ell0, L_theta=L_theta, r=r)


def quadraticize(stage: NonlinearStage, x: np.ndarray, controls: Sequence[np.ndarray],
                 theta: np.ndarray) -> Tuple[QuadraticCostStage, ...]:
    """Second-order expansion of every player's stage cost about (x, controls).

    The result is expressed in absolute coordinates, so a cost that is already
    quadratic maps to itself regardless of the expansion point. Q is floored
    at ``HESSIAN_FLOOR`` to keep the local game convex in the state.

    Raises:
        GameModelError: If a Hessian entry is not finite.
    """
    x = np.asarray(x, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    controls = [np.atleast_1d(np.asarray(u, dtype=float)) for u in controls]
    result = []
    for i, u in enumerate(controls):
        derivs = stage_cost_derivatives(stage, i, x, u, theta)
        gx_of_theta = lambda th, i=i, u=u: stage_cost_derivatives(stage, i, x, u, th).gx
        result.append(_absolute_quadratic(derivs, gx_of_theta, x, u, theta, f"player {i} cost"))
    return tuple(result)


def quadraticize_terminal(terminal: TerminalCost, x: np.ndarray,
                          theta: np.ndarray) -> Tuple[QuadraticCostStage, ...]:
    x = np.asarray(x, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    result = []
    for i in range(len(terminal.costs)):
        derivs = terminal_cost_derivatives(terminal, i, x, theta)
        gx_of_theta = lambda th, i=i: terminal_cost_derivatives(terminal, i, x, th).gx
        result.append(_absolute_quadratic(derivs, gx_of_theta, x, None, theta,
                                          f"player {i} terminal cost"))
    return tuple(result)


def _check_trajectory(game: GameDefinition, states: np.ndarray,
                      controls: Sequence[np.ndarray]) -> None:
    dims = game.dims
    if states.shape != (dims.T + 1, dims.n):
        bad = next((t for t, s in enumerate(states) if np.shape(s) != (dims.n,)), len(states))
        raise DimensionError(
            f"states at stage {bad}: expected {(dims.T + 1, dims.n)} trajectory, got {states.shape}"
        )
    if len(controls) != dims.num_players:
        raise DimensionError(f"expected controls for {dims.num_players} players, got {len(controls)}")
    for i, (u, m) in enumerate(zip(controls, dims.control_dims)):
        if np.shape(u) != (dims.T, m):
            raise DimensionError(
                f"controls of player {i}: expected shape {(dims.T, m)}, got {np.shape(u)}"
            )


def evaluate_trajectory_cost(game: GameDefinition, states: np.ndarray,
                             controls: Sequence[np.ndarray], player: int,
                             theta: np.ndarray) -> float:
    """Total cost of ``player`` along a trajectory.

    Args:
        game: Game whose stage costs are summed.
        states: Array of shape (T + 1, n).
        controls: Per-player arrays of shape (T, m_i).
        player: Player index (0 is the certain player).
        theta: Intent parameter.

    Returns:
        Sum of the running costs in stage order plus the terminal cost.
    """
    states = np.asarray(states, dtype=float)
    controls = [np.asarray(u, dtype=float).reshape(len(u), -1) for u in controls]
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _check_trajectory(game, states, controls)
    total = 0.0
    for t in range(game.dims.T):
        total += game.stage_cost(t, player, states[t], controls[player][t], theta)
    return total + game.terminal_cost(player, states[game.dims.T], theta)


def rollout_open_loop(game: GameDefinition, x0: np.ndarray,
                      controls: Sequence[np.ndarray]) -> np.ndarray:
    """States x_0..x_T produced by an open-loop control sequence."""
    states = np.zeros((game.dims.T + 1, game.dims.n))
    states[0] = x0
    for t in range(game.dims.T):
        states[t + 1] = game.transition(t, states[t], [np.asarray(u[t]) for u in controls])
    return states
