"""Concrete interaction scenarios.

Each constructor takes a frozen parameter record and returns an
``EnvironmentSpec``: the game, the uncertain players' belief model and the
experiment defaults. Costs are assembled from residual terms

    weight * (a'x - offset - theta)^2      (theta only for the intent term)

which map exactly onto ``QuadraticCostStage`` for the LQ scenarios, plus two
nonlinear terms (table rigidity, collision hinge) with analytic derivatives.
"""

import logging
from dataclasses import asdict, dataclass, fields
from functools import partial
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .core_model import (
    CostDerivatives,
    GameDefinition,
    GameDimensions,
    GameModelError,
    LinearStage,
    NonlinearStage,
    QuadraticCostStage,
    TerminalCost,
)
from .estimation import BeliefKind, EstimatorConfig
from .intent_demo import AugmentedState


logger = logging.getLogger(__name__)


class EnvironmentConfigError(Exception):
    """Exception raised for invalid environment names or parameters."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


# Cost terms

TermValue = Tuple[float, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ResidualTerm:
    """weight * (a'x - offset - theta[0])^2, with theta only when ``tracks_intent``."""
    weight: float
    coefficients: Tuple[Tuple[int, float], ...]
    offset: float = 0.0
    tracks_intent: bool = False

    def direction(self, n: int) -> np.ndarray:
        a = np.zeros(n)
        for index, value in self.coefficients:
            a[index] += value
        return a

    def __call__(self, x: np.ndarray, theta: np.ndarray) -> TermValue:
        a = self.direction(x.size)
        r = float(a @ x) - self.offset - (float(theta[0]) if self.tracks_intent else 0.0)
        return self.weight * r * r, 2.0 * self.weight * r * a, 2.0 * self.weight * np.outer(a, a)


def track(weight: float, index: int, target: float = 0.0) -> ResidualTerm:
    return ResidualTerm(weight, ((index, 1.0),), target)


def track_intent(weight: float, index: int) -> ResidualTerm:
    return ResidualTerm(weight, ((index, 1.0),), 0.0, tracks_intent=True)


@dataclass(frozen=True)
class RigidityTerm:
    """weight * ||(p_H - p_R) - L [cos phi, sin phi]||^2 for a rigid table of length L."""
    weight: float
    human: Tuple[int, int]
    robot: Tuple[int, int]
    angle: int
    length: float

    def __call__(self, x: np.ndarray, theta: np.ndarray) -> TermValue:
        phi = x[self.angle]
        c, s = np.cos(phi), np.sin(phi)
        r = x[list(self.human)] - x[list(self.robot)] - self.length * np.array([c, s])
        J = np.zeros((2, x.size))
        J[:, list(self.human)] = np.eye(2)
        J[:, list(self.robot)] = -np.eye(2)
        J[:, self.angle] = self.length * np.array([s, -c])
        H = 2.0 * self.weight * (J.T @ J)
        H[self.angle, self.angle] += 2.0 * self.weight * self.length * (r[0] * c + r[1] * s)
        return self.weight * float(r @ r), 2.0 * self.weight * J.T @ r, H


@dataclass(frozen=True)
class CollisionTerm:
    """Squared hinge weight * max(0, radius - ||p_i - p_j||)^2."""
    weight: float
    first: Tuple[int, int]
    second: Tuple[int, int]
    radius: float

    def __call__(self, x: np.ndarray, theta: np.ndarray) -> TermValue:
        grad = np.zeros(x.size)
        hess = np.zeros((x.size, x.size))
        delta = x[list(self.first)] - x[list(self.second)]
        distance = float(np.linalg.norm(delta))
        if distance >= self.radius:
            return 0.0, grad, hess
        if distance < 1e-9:
            distance, e = 1e-9, np.array([1.0, 0.0])
        else:
            e = delta / distance
        shortfall = self.radius - distance
        g = -2.0 * self.weight * shortfall * e
        H = 2.0 * self.weight * (np.outer(e, e) - shortfall * (np.eye(2) - np.outer(e, e)) / distance)
        i, j = list(self.first), list(self.second)
        grad[i], grad[j] = g, -g
        hess[np.ix_(i, i)] += H
        hess[np.ix_(j, j)] += H
        hess[np.ix_(i, j)] -= H
        hess[np.ix_(j, i)] -= H
        return self.weight * shortfall ** 2, grad, hess


def _sum_terms(terms, x: np.ndarray, theta: np.ndarray) -> TermValue:
    x = np.asarray(x, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    value, grad, hess = 0.0, np.zeros(x.size), np.zeros((x.size, x.size))
    for term in terms:
        v, g, h = term(x, theta)
        value, grad, hess = value + v, grad + g, hess + h
    return value, grad, hess


@dataclass(frozen=True)
class PlayerCost:
    """Running and terminal state terms plus a diagonal control effort."""
    running: Tuple[Callable, ...]
    terminal: Tuple[Callable, ...]
    effort: Tuple[float, ...]

    def stage(self, x, u, theta) -> float:
        u = np.atleast_1d(u)
        return _sum_terms(self.running, x, theta)[0] + float(u @ (np.asarray(self.effort) * u))

    def stage_derivatives(self, x, u, theta) -> CostDerivatives:
        _, gx, Hxx = _sum_terms(self.running, x, theta)
        E = np.asarray(self.effort)
        return CostDerivatives(gx=gx, Hxx=Hxx, gu=2.0 * E * np.atleast_1d(u), Huu=2.0 * np.diag(E))

    def final(self, x, theta) -> float:
        return _sum_terms(self.terminal, x, theta)[0]

    def final_derivatives(self, x, theta) -> CostDerivatives:
        _, gx, Hxx = _sum_terms(self.terminal, x, theta)
        return CostDerivatives(gx=gx, Hxx=Hxx)


def quadratic_cost_stage(terms, n: int, p: int, R: Optional[np.ndarray] = None,
                         state_floor: float = 0.0) -> QuadraticCostStage:
    """Exact QuadraticCostStage of a sum of residual terms (constants dropped)."""
    Q = state_floor * np.eye(n)
    ell0 = np.zeros(n)
    L_theta = np.zeros((n, p))
    for term in terms:
        a = term.direction(n)
        Q += term.weight * np.outer(a, a)
        ell0 += -2.0 * term.weight * term.offset * a
        if term.tracks_intent:
            L_theta[:, 0] += -2.0 * term.weight * a
    return QuadraticCostStage(Q=Q, R=R, ell0=ell0, L_theta=L_theta)


def _lq_game(n: int, control_dims, T: int, A: np.ndarray, B, running, terminal, efforts,
             intent_bounds, state_floor: float) -> GameDefinition:
    p = 1
    stage = LinearStage(A=A, B=tuple(B))
    step_costs = tuple(
        quadratic_cost_stage(terms, n, p, R=effort * np.eye(m), state_floor=state_floor)
        for terms, effort, m in zip(running, efforts, control_dims)
    )
    final_costs = tuple(quadratic_cost_stage(terms, n, p, state_floor=state_floor) for terms in terminal)
    return GameDefinition(
        dims=GameDimensions(n=n, control_dims=tuple(control_dims), p=p, T=T),
        intent_lower=intent_bounds[0],
        intent_upper=intent_bounds[1],
        linear_stages=(stage,) * T,
        cost_stages=(step_costs,) * T + (final_costs,),
    )


def _nonlinear_game(n: int, control_dims, T: int, transition, jacobian, costs, intent_bounds,
                    state_lower=None, state_upper=None) -> GameDefinition:
    stage = NonlinearStage(
        transition=transition,
        costs=tuple(c.stage for c in costs),
        jacobian=jacobian,
        cost_derivatives=tuple(c.stage_derivatives for c in costs),
        state_lower=state_lower,
        state_upper=state_upper,
    )
    return GameDefinition(
        dims=GameDimensions(n=n, control_dims=tuple(control_dims), p=1, T=T),
        intent_lower=intent_bounds[0],
        intent_upper=intent_bounds[1],
        nonlinear_stages=(stage,) * T,
        terminal=TerminalCost(
            costs=tuple(c.final for c in costs),
            derivatives=tuple(c.final_derivatives for c in costs),
        ),
    )


# Dynamics

def planar_double_integrator(dt: float, offset: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Semi-implicit Euler of a planar point mass [px, py, vx, vy] at ``offset``.

    Returns the state block embedded in an n x n identity and the n x 2 input map.
    """
    A = np.eye(n)
    A[offset, offset + 2] = dt
    A[offset + 1, offset + 3] = dt
    B = np.zeros((n, 2))
    B[offset:offset + 4] = [[dt * dt, 0.0], [0.0, dt * dt], [dt, 0.0], [0.0, dt]]
    return A, B


def unicycle_transition(dt: float, count: int, x, controls) -> np.ndarray:
    """Forward Euler of ``count`` unicycles [px, py, psi, v] with controls [a, w]."""
    x = np.asarray(x, dtype=float)
    x_next = x.copy()
    for i in range(count):
        px, py, psi, v = x[4 * i:4 * i + 4]
        a, w = np.atleast_1d(controls[i])
        x_next[4 * i:4 * i + 4] = [px + dt * v * np.cos(psi), py + dt * v * np.sin(psi),
                                   psi + dt * w, v + dt * a]
    return x_next


def unicycle_jacobian(dt: float, count: int, x, controls):
    x = np.asarray(x, dtype=float)
    n = 4 * count
    A = np.eye(n)
    Bs = []
    for i in range(count):
        o = 4 * i
        psi, v = x[o + 2], x[o + 3]
        A[o, o + 2] = -dt * v * np.sin(psi)
        A[o, o + 3] = dt * np.cos(psi)
        A[o + 1, o + 2] = dt * v * np.cos(psi)
        A[o + 1, o + 3] = dt * np.sin(psi)
        B = np.zeros((n, 2))
        B[o + 3, 0] = dt
        B[o + 2, 1] = dt
        Bs.append(B)
    return A, Bs


def table_transition(dt: float, length: float, x, controls) -> np.ndarray:
    """Carriers move with their velocities; the table turns with their relative motion."""
    x = np.asarray(x, dtype=float)
    u_h, u_r = np.atleast_1d(controls[0]), np.atleast_1d(controls[1])
    phi = x[4]
    normal = np.array([-np.sin(phi), np.cos(phi)])
    return np.concatenate([x[0:2] + dt * u_h, x[2:4] + dt * u_r,
                           [phi + dt * float((u_h - u_r) @ normal) / length]])


def table_jacobian(dt: float, length: float, x, controls):
    x = np.asarray(x, dtype=float)
    u_h, u_r = np.atleast_1d(controls[0]), np.atleast_1d(controls[1])
    phi = x[4]
    normal = np.array([-np.sin(phi), np.cos(phi)])
    A = np.eye(5)
    A[4, 4] = 1.0 + dt * float((u_h - u_r) @ np.array([-np.cos(phi), -np.sin(phi)])) / length
    B_h = np.zeros((5, 2))
    B_r = np.zeros((5, 2))
    B_h[0:2] = dt * np.eye(2)
    B_r[2:4] = dt * np.eye(2)
    B_h[4] = dt * normal / length
    B_r[4] = -dt * normal / length
    return A, [B_h, B_r]


# Parameters

@dataclass(frozen=True)
class EnvironmentParams:
    """Fields shared by every scenario; subclasses override the defaults."""
    dt: float = 0.1
    T: int = 40
    alpha: float = 0.5
    rho1: float = 1.0
    rho2: float = 1.0
    theta_star: float = 0.0
    theta_grid: Tuple[float, ...] = ()
    intent_lower: float = -10.0
    intent_upper: float = 10.0
    initial_estimate: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                object.__setattr__(self, f.name, tuple(
                    tuple(v) if isinstance(v, list) else v for v in value))
        if self.dt <= 0:
            raise EnvironmentConfigError(f"dt must be positive, got {self.dt}", key='dt')
        if int(self.T) != self.T or self.T < 1:
            raise EnvironmentConfigError(f"T must be a positive integer, got {self.T}", key='T')
        if not 0.0 <= self.alpha < 1.0:
            raise EnvironmentConfigError(f"alpha must lie in [0, 1), got {self.alpha}", key='alpha')
        if self.intent_lower > self.intent_upper:
            raise EnvironmentConfigError("intent_lower exceeds intent_upper", key='intent_lower')
        for f in fields(self):
            if f.name.startswith(('w_', 'effort', 'weight')) and getattr(self, f.name) < 0:
                raise EnvironmentConfigError(f"{f.name} must be non-negative", key=f.name)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> 'EnvironmentParams':
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise EnvironmentConfigError(f"unknown parameter for {cls.__name__}: {key}", key=key)
        try:
            return cls(**data)
        except TypeError as e:
            raise EnvironmentConfigError(f"invalid parameter value: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        def plain(value):
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            return value
        return {k: plain(v) for k, v in asdict(self).items()}

    @property
    def intent_bounds(self) -> Tuple[float, float]:
        return self.intent_lower, self.intent_upper


@dataclass(frozen=True)
class ScalarToyParams(EnvironmentParams):
    """x' = x + u1 + u2; player 1 pays (x - theta)^2, player 2 pays q x^2."""
    T: int = 5
    rho2: float = 0.0
    theta_star: float = 1.0
    theta_grid: Tuple[float, ...] = (1.0,)
    q: float = 1.0
    effort: float = 1.0
    x0: float = 0.0


@dataclass(frozen=True)
class LunarLanderParams(EnvironmentParams):
    """Pilot (horizontal thrust, knows the landing target) and autopilot (both axes)."""
    T: int = 60
    rho2: float = 4.0
    theta_star: float = 25.0
    theta_grid: Tuple[float, ...] = (25.0,)
    switch_time: Optional[int] = 20
    switch_theta: float = 50.0
    intent_lower: float = -100.0
    intent_upper: float = 100.0
    initial_estimate: float = 25.0
    w_target: float = 0.1
    w_target_terminal: float = 10.0
    effort_pilot: float = 1.0
    w_altitude: float = 0.1
    w_descent: float = 0.5
    w_drift: float = 0.5
    effort_autopilot: float = 1.0
    terminal_scale: float = 10.0
    state_floor: float = 1e-4
    x0: Tuple[float, ...] = (0.0, 0.0, 10.0, 0.0)


@dataclass(frozen=True)
class ManipulationParams(EnvironmentParams):
    """Two end-effectors carrying a pot by its two handles."""
    theta_star: float = 0.5
    theta_grid: Tuple[float, ...] = (0.5,)
    intent_lower: float = -1.0
    intent_upper: float = 1.0
    handle_x: float = 0.25
    separation: float = 0.5
    start_x: float = 0.6
    w_goal: float = 1.0
    w_separation: float = 1.0
    w_velocity: float = 0.1
    effort: float = 4.0
    terminal_scale: float = 10.0
    state_floor: float = 1e-4
    ratios: Tuple[float, ...] = (0.0, 1.0, 10.0)


@dataclass(frozen=True)
class FurnitureParams(EnvironmentParams):
    """Human and robot carrying a table; the human prefers a final table angle."""
    T: int = 30
    rho2: float = 0.0
    theta_star: float = 0.3
    theta_grid: Tuple[float, ...] = (0.3, 1.1)
    intent_lower: float = -1.5
    intent_upper: float = 1.5
    initial_estimate: float = 0.1
    prior_variance: float = 0.4
    noise_scale: float = 1.0
    length: float = 1.0
    phi0: float = 0.6
    goal: Tuple[float, float] = (2.0, 0.0)
    w_angle: float = 1.0
    w_angle_terminal: float = 1000.0
    w_destination: float = 1.0
    w_destination_terminal: float = 10.0
    w_rigidity: float = 10.0
    effort_human: float = 1.0
    effort_robot: float = 1.0


@dataclass(frozen=True)
class PlatooningParams(EnvironmentParams):
    """A human-driven lead vehicle changing lanes, followed by two automated vehicles."""
    T: int = 30
    rho2: float = 0.0
    theta_star: float = 1.0
    theta_grid: Tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    intent_lower: float = -4.0
    intent_upper: float = 4.0
    initial_estimate: float = 0.0
    prior_variance: float = 1.0
    noise_scale: float = 1.0
    speed: float = 5.0
    w_lane: float = 1.0
    w_lane_terminal: float = 10.0
    w_follow: float = 1.0
    w_follow_terminal: float = 10.0
    w_heading: float = 1.0
    w_speed: float = 1.0
    effort_accel: float = 1.0
    effort_turn: float = 1.0
    weight_collision: float = 10.0
    collision_radius: float = 1.5
    human_start: Tuple[float, float] = (0.0, 0.0)
    follower_starts: Tuple[Tuple[float, float], ...] = ((-5.0, 1.0), (-5.0, -1.0))


# Specs

@dataclass(frozen=True)
class EnvironmentSpec:
    """A constructed scenario.

    Attributes:
        name: Registry name.
        params: Parameter record the game was built from.
        game: Game definition.
        intent: What the intent parameter means.
        estimator: Belief model of the uncertain players.
        x0: Initial physical state.
    """
    name: str
    params: EnvironmentParams
    game: GameDefinition
    intent: str
    estimator: EstimatorConfig
    x0: np.ndarray

    @property
    def belief_kind(self) -> BeliefKind:
        return self.estimator.kind

    @property
    def theta_star(self) -> np.ndarray:
        return np.atleast_1d(float(self.params.theta_star))

    @property
    def theta_grid(self) -> Tuple[float, ...]:
        return tuple(self.params.theta_grid) or (float(self.params.theta_star),)

    @property
    def switch(self) -> Optional[Tuple[int, np.ndarray]]:
        t_switch = getattr(self.params, 'switch_time', None)
        if t_switch is None:
            return None
        return int(t_switch), np.atleast_1d(float(self.params.switch_theta))

    def initial_state(self, initial_estimate: Optional[float] = None) -> AugmentedState:
        estimate = self.estimator.initial_estimate if initial_estimate is None \
            else np.atleast_1d(float(initial_estimate))
        return AugmentedState.uniform(self.x0, estimate, self.game.dims.num_players - 1)

    def default_config(self) -> Dict[str, Any]:
        return {'name': self.name, 'intent': self.intent, 'params': self.params.to_dict()}


def _point_estimator(params: EnvironmentParams) -> EstimatorConfig:
    return EstimatorConfig(kind=BeliefKind.POINT, alpha=params.alpha,
                           initial_estimate=[params.initial_estimate])


def _gaussian_estimator(params) -> EstimatorConfig:
    if params.prior_variance <= 0:
        raise EnvironmentConfigError("prior_variance must be positive", key='prior_variance')
    return EstimatorConfig(kind=BeliefKind.GAUSSIAN, alpha=params.alpha,
                           noise_scale=params.noise_scale,
                           initial_estimate=[params.initial_estimate],
                           prior_covariance=[[params.prior_variance]])


def _build(name: str, params: EnvironmentParams, builder) -> Tuple[GameDefinition, np.ndarray, str]:
    try:
        game, x0, intent = builder(params)
    except GameModelError as e:
        raise EnvironmentConfigError(f"{name}: parameters produce an invalid game: {e}") from e
    return game, np.asarray(x0, dtype=float), intent


def make_scalar_toy(params: Optional[ScalarToyParams] = None) -> EnvironmentSpec:
    params = params or ScalarToyParams()

    def builder(prm):
        running = ((track_intent(1.0, 0),), (track(prm.q, 0),))
        game = _lq_game(1, (1, 1), prm.T, np.eye(1), (np.eye(1), np.eye(1)), running, running,
                        (prm.effort, prm.effort), prm.intent_bounds, 0.0)
        return game, [prm.x0], "target of player 1's state"

    game, x0, intent = _build('scalar_toy', params, builder)
    return EnvironmentSpec('scalar_toy', params, game, intent, _point_estimator(params), x0)


def make_lunar_lander(params: Optional[LunarLanderParams] = None) -> EnvironmentSpec:
    """Pilot and autopilot sharing a lander with state [px, vx, py, vy].

    The pilot knows the horizontal landing target theta; the autopilot keeps
    altitude, descent rate and drift small and must infer the target.
    """
    params = params or LunarLanderParams()

    def builder(prm):
        dt = prm.dt
        A = np.eye(4)
        A[0, 1] = dt
        A[2, 3] = dt
        B_pilot = np.array([[dt * dt], [dt], [0.0], [0.0]])
        B_auto = np.array([[dt * dt, 0.0], [dt, 0.0], [0.0, dt * dt], [0.0, dt]])
        s = prm.terminal_scale
        running = (
            (track_intent(prm.w_target, 0),),
            (track(prm.w_altitude, 2), track(prm.w_descent, 3), track(prm.w_drift, 1)),
        )
        terminal = (
            (track_intent(prm.w_target_terminal, 0),),
            (track(s * prm.w_altitude, 2), track(s * prm.w_descent, 3), track(s * prm.w_drift, 1)),
        )
        game = _lq_game(4, (1, 2), prm.T, A, (B_pilot, B_auto), running, terminal,
                        (prm.effort_pilot, prm.effort_autopilot), prm.intent_bounds, prm.state_floor)
        return game, prm.x0, "horizontal landing target of the pilot"

    if len(params.x0) != 4:
        raise EnvironmentConfigError("x0 must have 4 entries [px, vx, py, vy]", key='x0')
    game, x0, intent = _build('lunar_lander', params, builder)
    return EnvironmentSpec('lunar_lander', params, game, intent, _point_estimator(params), x0)


def make_manipulation(params: Optional[ManipulationParams] = None) -> EnvironmentSpec:
    """Two planar end-effectors [px, py, vx, vy] each, accelerations as controls.

    The certain robot wants its handle at height theta; the other robot
    mirrors it to the opposite handle. Both keep the handles ``separation``
    apart horizontally and damp their velocities.
    """
    params = params or ManipulationParams()

    def builder(prm):
        n = 8
        A1, B1 = planar_double_integrator(prm.dt, 0, n)
        A2, B2 = planar_double_integrator(prm.dt, 4, n)
        A = A1 + A2 - np.eye(n)
        separation = ResidualTerm(prm.w_separation, ((4, 1.0), (0, -1.0)), prm.separation)

        def terms(scale):
            leader = (
                track_intent(scale * prm.w_goal, 1),
                track(scale * prm.w_goal, 0, -prm.handle_x),
                ResidualTerm(scale * separation.weight, separation.coefficients, separation.offset),
                track(scale * prm.w_velocity, 2), track(scale * prm.w_velocity, 3),
            )
            follower = (
                ResidualTerm(scale * prm.w_goal, ((5, 1.0), (1, 1.0))),
                track(scale * prm.w_goal, 4, prm.handle_x),
                ResidualTerm(scale * separation.weight, separation.coefficients, separation.offset),
                track(scale * prm.w_velocity, 6), track(scale * prm.w_velocity, 7),
            )
            return leader, follower

        game = _lq_game(n, (2, 2), prm.T, A, (B1, B2), terms(1.0), terms(prm.terminal_scale),
                        (prm.effort, prm.effort), prm.intent_bounds, prm.state_floor)
        x0 = [-prm.start_x, 0.0, 0.0, 0.0, prm.start_x, 0.0, 0.0, 0.0]
        return game, x0, "height of the certain robot's handle"

    game, x0, intent = _build('manipulation', params, builder)
    return EnvironmentSpec('manipulation', params, game, intent, _point_estimator(params), x0)


def make_furniture(params: Optional[FurnitureParams] = None) -> EnvironmentSpec:
    """Human and robot carrying a table, state [pHx, pHy, pRx, pRy, phi].

    Velocity controls move the carriers; their relative motion across the
    table turns it. The human knows the preferred final angle theta.
    """
    params = params or FurnitureParams()

    def builder(prm):
        gx, gy = prm.goal

        def destination(weight):
            return (ResidualTerm(weight, ((0, 0.5), (2, 0.5)), gx),
                    ResidualTerm(weight, ((1, 0.5), (3, 0.5)), gy))

        human = PlayerCost(
            running=(track_intent(prm.w_angle, 4),) + destination(prm.w_destination),
            terminal=(track_intent(prm.w_angle_terminal, 4),) + destination(prm.w_destination_terminal),
            effort=(prm.effort_human,) * 2,
        )
        rigidity = RigidityTerm(prm.w_rigidity, (0, 1), (2, 3), 4, prm.length)
        robot = PlayerCost(
            running=(rigidity,) + destination(prm.w_destination),
            terminal=(rigidity,) + destination(prm.w_destination_terminal),
            effort=(prm.effort_robot,) * 2,
        )
        game = _nonlinear_game(
            5, (2, 2), prm.T,
            partial(table_transition, prm.dt, prm.length),
            partial(table_jacobian, prm.dt, prm.length),
            (human, robot), prm.intent_bounds,
        )
        x0 = [prm.length * np.cos(prm.phi0), prm.length * np.sin(prm.phi0), 0.0, 0.0, prm.phi0]
        return game, x0, "preferred table angle of the human (rad)"

    if params.length <= 0:
        raise EnvironmentConfigError("length must be positive", key='length')
    game, x0, intent = _build('furniture', params, builder)
    return EnvironmentSpec('furniture', params, game, intent, _gaussian_estimator(params), x0)


def make_platooning(params: Optional[PlatooningParams] = None) -> EnvironmentSpec:
    """Three unicycles [px, py, psi, v]; the human lead picks a lane theta, the others follow it."""
    params = params or PlatooningParams()

    def builder(prm):
        count = 1 + len(prm.follower_starts)

        def idx(vehicle, k):
            return 4 * vehicle + k

        def collisions(vehicle):
            return tuple(
                CollisionTerm(prm.weight_collision, (idx(vehicle, 0), idx(vehicle, 1)),
                              (idx(other, 0), idx(other, 1)), prm.collision_radius)
                for other in range(count) if other != vehicle
            )

        def common(vehicle):
            return (track(prm.w_heading, idx(vehicle, 2)),
                    track(prm.w_speed, idx(vehicle, 3), prm.speed)) + collisions(vehicle)

        effort = (prm.effort_accel, prm.effort_turn)
        costs = [PlayerCost(
            running=(track_intent(prm.w_lane, idx(0, 1)),) + common(0),
            terminal=(track_intent(prm.w_lane_terminal, idx(0, 1)),) + common(0),
            effort=effort,
        )]
        for vehicle in range(1, count):
            follow = ((idx(vehicle, 1), 1.0), (idx(0, 1), -1.0))
            costs.append(PlayerCost(
                running=(ResidualTerm(prm.w_follow, follow),) + common(vehicle),
                terminal=(ResidualTerm(prm.w_follow_terminal, follow),) + common(vehicle),
                effort=effort,
            ))
        game = _nonlinear_game(
            4 * count, (2,) * count, prm.T,
            partial(unicycle_transition, prm.dt, count),
            partial(unicycle_jacobian, prm.dt, count),
            tuple(costs), prm.intent_bounds,
        )
        starts = (tuple(prm.human_start),) + tuple(tuple(s) for s in prm.follower_starts)
        x0 = np.concatenate([[px, py, 0.0, prm.speed] for px, py in starts])
        return game, x0, "lateral coordinate of the lead vehicle's target lane"

    if len(params.follower_starts) < 1:
        raise EnvironmentConfigError("platooning needs at least one follower", key='follower_starts')
    game, x0, intent = _build('platooning', params, builder)
    return EnvironmentSpec('platooning', params, game, intent, _gaussian_estimator(params), x0)


ENVIRONMENTS = {
    'scalar_toy': (ScalarToyParams, make_scalar_toy),
    'lunar_lander': (LunarLanderParams, make_lunar_lander),
    'manipulation': (ManipulationParams, make_manipulation),
    'furniture': (FurnitureParams, make_furniture),
    'platooning': (PlatooningParams, make_platooning),
}


def make_environment(name: str, overrides: Optional[Dict[str, Any]] = None) -> EnvironmentSpec:
    """Construct a registered environment with parameter overrides.

    Raises:
        EnvironmentConfigError: On an unknown name or parameter.
    """
    if name not in ENVIRONMENTS:
        raise EnvironmentConfigError(
            f"unknown environment: {name} (expected one of {', '.join(sorted(ENVIRONMENTS))})",
            key='name',
        )
    params_cls, factory = ENVIRONMENTS[name]
    spec = factory(params_cls.from_dict(overrides))
    logger.info(
        f"Built environment {name}: n={spec.game.dims.n}, N={spec.game.dims.num_players}, "
        f"T={spec.game.dims.T}, beliefs={spec.belief_kind.value}"
    )
    return spec
