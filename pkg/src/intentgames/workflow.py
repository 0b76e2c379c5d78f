"""Experiment configuration and the run, check and bench workflows."""

import logging
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import yaml
from tqdm import tqdm

from . import artifacts
from .core_model import CERTAIN_PLAYER
from .environments import EnvironmentConfigError, EnvironmentSpec, make_environment
from .estimation import contraction_report
from .intent_demo import cost_to_go_jacobian
from .simulation import (
    InteractionKind,
    InteractionModel,
    InteractionPlan,
    RolloutRecord,
    SimulationError,
    convergence_after,
    regret,
    rollout,
)


logger = logging.getLogger(__name__)

ENV_PREFIX = 'INTENTGAMES_'
METRICS = ('regret', 'time_to_convergence', 'final_belief_error')
PROPOSITIONS = ('prop1', 'prop2')
RATIO_TOL = 1e-9
RATIO_ERROR_FLOOR = 1e-9
PROP1_TARGET = 1e-3
PROP2_JACOBIAN_MIN = 1e-3
PROP2_GAP_MIN = 1e-6

_TOP_LEVEL_KEYS = {
    'environment', 'models', 'ratios', 'theta_star', 'theta_grid', 'alpha', 'horizon',
    'initial_estimate', 'switch', 'metrics', 'epsilon', 'output_dir', 'seed', 'noise_std',
    'threads', 'check', 'bench',
}


class ConfigError(Exception):
    """Exception raised for invalid experiment configuration."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def _fail(key: str, problem: str) -> None:
    raise ConfigError(f"{key}: {problem}", key=key)


def _check_keys(data: Mapping[str, Any], allowed, prefix: str = '') -> None:
    for key in data:
        if key not in allowed:
            _fail(f"{prefix}{key}", "unknown key")


def parse_model(entry: Any, index: int) -> InteractionModel:
    """Parse one ``models`` entry: a kind name or a mapping with kind, rho1, rho2."""
    key = f"models[{index}]"
    if isinstance(entry, str):
        entry = {'kind': entry}
    if not isinstance(entry, Mapping):
        _fail(key, "must be a model name or a mapping")
    _check_keys(entry, {'kind', 'rho1', 'rho2'}, f"{key}.")
    kind = entry.get('kind')
    try:
        if kind == InteractionKind.ACTIVE.value:
            return InteractionModel.active(entry.get('rho1', 1.0), entry.get('rho2', 1.0))
        if kind == InteractionKind.PASSIVE.value:
            return InteractionModel.passive()
        if kind == InteractionKind.COMPLETE_INFO.value:
            return InteractionModel.complete_info()
    except (SimulationError, TypeError) as e:
        raise ConfigError(f"{key}: {e}", key=key) from e
    raise ConfigError(
        f"{key}.kind: expected one of active, passive, complete_info, got {kind!r}",
        key=f"{key}.kind",
    )


def _model_to_dict(model: InteractionModel) -> Dict[str, Any]:
    if model.kind is InteractionKind.ACTIVE:
        return {'kind': model.kind.value, 'rho1': model.rho1, 'rho2': model.rho2}
    return {'kind': model.kind.value}


@dataclass
class ExperimentConfig:
    """Configuration of one experiment.

    ``alpha``, ``horizon``, ``theta_star`` and ``initial_estimate`` are shortcuts
    for the matching environment parameters. ``switch`` replaces the
    environment's own intent switch when ``switch_set`` is True; a None switch
    then disables it.
    """
    environment: str = 'manipulation'
    params: Dict[str, Any] = field(default_factory=dict)
    models: List[InteractionModel] = field(default_factory=lambda: [
        InteractionModel.active(1.0, 1.0), InteractionModel.passive(), InteractionModel.complete_info()
    ])
    ratios: List[float] = field(default_factory=list)
    theta_star: Optional[float] = None
    theta_grid: List[float] = field(default_factory=list)
    alpha: Optional[float] = None
    horizon: Optional[int] = None
    initial_estimate: Optional[float] = None
    switch: Optional[Tuple[int, float]] = None
    switch_set: bool = False
    metrics: List[str] = field(default_factory=lambda: list(METRICS))
    epsilon: float = 0.05
    output_dir: str = 'results'
    seed: int = 0
    noise_std: float = 0.0
    threads: int = 1
    check_rho2: float = 1.0
    bench_environments: List[str] = field(default_factory=list)
    bench_repeats: int = 100

    def __post_init__(self):
        if not self.models and not self.ratios:
            _fail('models', "must be non-empty")
        for metric in self.metrics:
            if metric not in METRICS:
                _fail('metrics', f"unknown metric {metric!r} (expected one of {', '.join(METRICS)})")
        if self.epsilon <= 0:
            _fail('epsilon', "must be positive")
        if self.noise_std < 0:
            _fail('noise_std', "must be non-negative")
        if int(self.threads) != self.threads or self.threads < 1:
            _fail('threads', "must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            _fail('seed', "must be a non-negative integer")
        if self.bench_repeats < 1:
            _fail('bench.repeats', "must be at least 1")
        for r in self.ratios:
            if r < 0:
                _fail('ratios', "ratios must be non-negative")
        if self.check_rho2 <= 0:
            _fail('check.rho2', "must be positive")

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> 'ExperimentConfig':
        """Create configuration from dictionary."""
        if not isinstance(config_dict, Mapping):
            raise ConfigError("configuration must be a mapping")
        _check_keys(config_dict, _TOP_LEVEL_KEYS)

        env = config_dict.get('environment', {})
        if isinstance(env, str):
            env = {'name': env}
        if not isinstance(env, Mapping):
            _fail('environment', "must be a name or a mapping")
        _check_keys(env, {'name', 'params'}, 'environment.')
        params = env.get('params') or {}
        if not isinstance(params, Mapping):
            _fail('environment.params', "must be a mapping")

        raw_models = config_dict.get('models', [
            {'kind': 'active', 'rho1': 1.0, 'rho2': 1.0}, 'passive', 'complete_info'
        ])
        if raw_models is None:
            raw_models = []
        if not isinstance(raw_models, list):
            _fail('models', "must be a list")

        switch, switch_set = None, 'switch' in config_dict
        raw_switch = config_dict.get('switch')
        if raw_switch is not None:
            if not isinstance(raw_switch, Mapping) or set(raw_switch) != {'time', 'theta'}:
                _fail('switch', "must be null or a mapping with keys time and theta")
            switch = (int(raw_switch['time']), float(raw_switch['theta']))

        check = config_dict.get('check') or {}
        _check_keys(check, {'rho2'}, 'check.')
        bench = config_dict.get('bench') or {}
        _check_keys(bench, {'environments', 'repeats'}, 'bench.')

        theta_grid = config_dict.get('theta_grid') or []
        if not isinstance(theta_grid, list):
            _fail('theta_grid', "must be a list")

        return cls(
            environment=env.get('name', 'manipulation'),
            params=dict(params),
            models=[parse_model(entry, i) for i, entry in enumerate(raw_models)],
            ratios=[float(r) for r in config_dict.get('ratios') or []],
            theta_star=config_dict.get('theta_star'),
            theta_grid=[float(v) for v in theta_grid],
            alpha=config_dict.get('alpha'),
            horizon=config_dict.get('horizon'),
            initial_estimate=config_dict.get('initial_estimate'),
            switch=switch,
            switch_set=switch_set,
            metrics=list(config_dict.get('metrics', METRICS)),
            epsilon=float(config_dict.get('epsilon', 0.05)),
            output_dir=str(config_dict.get('output_dir', 'results')),
            seed=config_dict.get('seed', 0),
            noise_std=float(config_dict.get('noise_std', 0.0)),
            threads=config_dict.get('threads', 1),
            check_rho2=float(check.get('rho2', 1.0)),
            bench_environments=list(bench.get('environments') or []),
            bench_repeats=int(bench.get('repeats', 100)),
        )

    @classmethod
    def from_yaml(cls, yaml_path: str) -> 'ExperimentConfig':
        """Load configuration from YAML file."""
        try:
            with open(yaml_path, 'r', encoding='utf-8') as f:
                config_dict = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {yaml_path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config {yaml_path} is not valid YAML: {e}") from e
        return cls.from_dict(config_dict or {})

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'environment': {'name': self.environment, 'params': dict(self.params)},
            'models': [_model_to_dict(m) for m in self.models],
            'ratios': list(self.ratios),
            'theta_star': self.theta_star,
            'theta_grid': list(self.theta_grid),
            'alpha': self.alpha,
            'horizon': self.horizon,
            'initial_estimate': self.initial_estimate,
            'metrics': list(self.metrics),
            'epsilon': self.epsilon,
            'output_dir': self.output_dir,
            'seed': self.seed,
            'noise_std': self.noise_std,
            'threads': self.threads,
            'check': {'rho2': self.check_rho2},
            'bench': {'environments': list(self.bench_environments), 'repeats': self.bench_repeats},
        }
        if self.switch_set:
            data['switch'] = None if self.switch is None else \
                {'time': self.switch[0], 'theta': self.switch[1]}
        return data

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None,
                       output_dir: Optional[str] = None) -> 'ExperimentConfig':
        """Copy with command-line values applied where given."""
        data = self.to_dict()
        if seed is not None:
            data['seed'] = seed
        if threads is not None:
            data['threads'] = threads
        if output_dir is not None:
            data['output_dir'] = output_dir
        return ExperimentConfig.from_dict(data)

    def environment_overrides(self) -> Dict[str, Any]:
        overrides = dict(self.params)
        for key, param in (('alpha', 'alpha'), ('horizon', 'T'), ('theta_star', 'theta_star'),
                           ('initial_estimate', 'initial_estimate')):
            value = getattr(self, key)
            if value is not None:
                overrides[param] = value
        return overrides

    def build_environment(self) -> EnvironmentSpec:
        """Construct the configured environment, reporting bad keys as ConfigError."""
        try:
            return make_environment(self.environment, self.environment_overrides())
        except EnvironmentConfigError as e:
            key = 'environment.name' if e.key == 'name' else f"environment.params.{e.key or ''}"
            raise ConfigError(f"{key.rstrip('.')}: {e}", key=key.rstrip('.')) from e

    def expanded_models(self, spec: Optional[EnvironmentSpec] = None) -> List[InteractionModel]:
        """Configured models plus one Active(rho1=1, rho2=ratio) per entry of ``ratios``.

        Without configured ratios the environment's own ratio sweep is used, if it has one.
        """
        models = list(self.models)
        ratios = self.ratios
        if not ratios and spec is not None:
            ratios = list(getattr(spec.params, 'ratios', ()))
        for ratio in ratios:
            model = InteractionModel.active(1.0, ratio)
            if model not in models:
                models.append(model)
        return models

    def resolve_switch(self, spec: EnvironmentSpec) -> Optional[Tuple[int, np.ndarray]]:
        if not self.switch_set:
            return spec.switch
        if self.switch is None:
            return None
        t_switch, theta = self.switch
        if not 0 <= t_switch <= spec.game.dims.T:
            _fail('switch.time', f"must lie in 0..{spec.game.dims.T}")
        return t_switch, np.atleast_1d(theta)

    def sweep(self, spec: EnvironmentSpec) -> List[float]:
        if self.theta_grid:
            return list(self.theta_grid)
        if self.theta_star is not None:
            return [float(self.theta_star)]
        return list(spec.theta_grid)


def apply_env_overrides(config: ExperimentConfig,
                        environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Apply INTENTGAMES_SEED, INTENTGAMES_THREADS and INTENTGAMES_OUT."""
    environ = os.environ if environ is None else environ

    def read(name: str, convert):
        raw = environ.get(ENV_PREFIX + name)
        if raw is None or raw == '':
            return None
        try:
            return convert(raw)
        except ValueError as e:
            raise ConfigError(f"{ENV_PREFIX}{name}: invalid value {raw!r}", key=ENV_PREFIX + name) from e

    return config.with_overrides(
        seed=read('SEED', int),
        threads=read('THREADS', int),
        output_dir=read('OUT', str),
    )


# Run

@dataclass
class SweepPoint:
    theta_star: float
    records: Dict[str, RolloutRecord]
    rows: List[Dict[str, Any]]


@dataclass
class ExperimentResult:
    """Outcome of ``run_experiment``."""
    config: ExperimentConfig
    points: List[SweepPoint]
    output_dir: Path
    files: List[Path]

    @property
    def summary(self) -> List[Dict[str, Any]]:
        return [row for point in self.points for row in point.rows]


def _summary_rows(config: ExperimentConfig, records: Dict[str, RolloutRecord],
                  reference: RolloutRecord, theta: float,
                  switch: Optional[Tuple[int, np.ndarray]]) -> List[Dict[str, Any]]:
    start = switch[0] if switch is not None else 0
    num_players = reference.num_players
    rows = []
    for label, record in records.items():
        model = record.model
        for player in range(num_players):
            row: Dict[str, Any] = {
                'model': label,
                'theta_star': theta,
                'ratio': model.ratio,
                'player': player + 1,
                'regret': None,
                'time_to_convergence': None,
                'final_belief_error': None,
            }
            if 'regret' in config.metrics:
                row['regret'] = regret(record, reference, player)
            if model.has_beliefs and player != CERTAIN_PLAYER:
                if 'time_to_convergence' in config.metrics:
                    row['time_to_convergence'] = convergence_after(
                        record, player, config.epsilon, start)
                if 'final_belief_error' in config.metrics:
                    row['final_belief_error'] = float(record.belief_errors(player)[-1])
            rows.append(row)
    return rows


def _run_point(config: ExperimentConfig, spec: EnvironmentSpec, models: List[InteractionModel],
               theta: float, shared_plan: Optional[InteractionPlan],
               switch: Optional[Tuple[int, np.ndarray]]) -> SweepPoint:
    theta_star = np.atleast_1d(theta)
    plan = shared_plan or InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
    if not plan.converged:
        logger.warning(f"Nash solve at theta*={theta:g} did not converge; using last iterate")
    initial = spec.initial_state()
    records = {
        model.label: rollout(plan, model, theta_star, initial, switch, config.noise_std, config.seed)
        for model in models
    }
    reference = records.get(InteractionModel.complete_info().label)
    if reference is None:
        reference = rollout(plan, InteractionModel.complete_info(), theta_star, initial, switch,
                            config.noise_std, config.seed)
    return SweepPoint(theta, records, _summary_rows(config, records, reference, theta, switch))


def _write_outputs(result_dir: Path, config: ExperimentConfig, points: List[SweepPoint],
                   files: List[Path]) -> None:
    def track(path: Path) -> Path:
        files.append(path)
        return path

    for point in points:
        for label, record in point.records.items():
            artifacts.write_rollout_csv(
                track(result_dir / 'rollouts' / f"{label}_{point.theta_star:g}.csv"), record)
    rows = [row for point in points for row in point.rows]
    artifacts.write_summary_csv(track(result_dir / 'summary.csv'), rows)
    if points:
        artifacts.plot_belief_errors(track(result_dir / 'belief_error.svg'), points[0].records)
    artifacts.plot_regret(track(result_dir / 'regret.svg'), rows)
    with open(track(result_dir / 'config.resolved.yaml'), 'w', encoding='utf-8') as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)


def _remove_partial(files: List[Path], created_dirs: List[Path]) -> None:
    for path in files:
        if path.exists():
            path.unlink()
    for directory in reversed(created_dirs):
        if directory.exists() and not any(directory.iterdir()):
            shutil.rmtree(directory, ignore_errors=True)


def run_experiment(config: ExperimentConfig, show_progress: bool = True) -> ExperimentResult:
    """Run every model over the intent sweep and write CSVs, plots and the resolved config.

    Sweep points run in a thread pool; all files are written afterwards by this
    function alone. On any failure the files written so far are removed.

    Raises:
        ConfigError: If the configuration does not describe a valid experiment.
        NashSolverError, ILQDivergenceError, IntentDemoError, SimulationError:
            If a solve or rollout fails.
    """
    spec = config.build_environment()
    models = config.expanded_models(spec)
    if not models:
        _fail('models', "must be non-empty")
    switch = config.resolve_switch(spec)
    thetas = config.sweep(spec)
    logger.info(
        f"Running {len(models)} models on {spec.name} over theta* {thetas} "
        f"with {config.threads} worker(s)"
    )

    shared_plan = None
    if spec.game.is_linear:
        shared_plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, spec.theta_star)

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        futures = [pool.submit(_run_point, config, spec, models, theta, shared_plan, switch)
                   for theta in thetas]
        points = [f.result() for f in tqdm(futures, desc='Sweep', unit='point',
                                           disable=not show_progress)]

    output_dir = Path(config.output_dir)
    created = [d for d in (output_dir, output_dir / 'rollouts') if not d.exists()]
    files: List[Path] = []
    try:
        _write_outputs(output_dir, config, points, files)
    except BaseException:
        logger.error(f"Writing results to {output_dir} failed; removing partial outputs")
        _remove_partial(files, created)
        raise
    logger.info(f"Wrote {len(files)} files to {output_dir}")
    return ExperimentResult(config=config, points=points, output_dir=output_dir, files=files)


# Checks

@dataclass
class CheckReport:
    proposition: str
    passed: bool
    details: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {'proposition': self.proposition, 'passed': self.passed, **self.details}


def _error_ratios(errors: np.ndarray) -> List[float]:
    return [float(errors[t + 1] / errors[t])
            for t in range(len(errors) - 1) if errors[t] > RATIO_ERROR_FLOOR]


def _require_linear(spec: EnvironmentSpec, proposition: str) -> None:
    if not spec.game.is_linear:
        raise ConfigError(
            f"environment.name: {proposition} needs a linear-quadratic environment, "
            f"{spec.name} is nonlinear",
            key='environment.name',
        )


def check_prop1(config: ExperimentConfig) -> CheckReport:
    """Contraction of the point-estimate dynamics and the teaching-only convergence bound."""
    spec = config.build_environment()
    _require_linear(spec, 'prop1')
    theta_star = spec.theta_star
    plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
    report = contraction_report(plan.policies, spec.estimator.alpha)
    initial = spec.initial_state()

    passive = rollout(plan, InteractionModel.passive(), theta_star, initial)
    teaching = rollout(plan, InteractionModel.active(0.0, config.check_rho2), theta_star, initial)
    players = spec.game.dims.uncertain_players

    passive_ratios = [r for j in players for r in _error_ratios(passive.belief_errors(j))]
    teaching_ratios = [r for j in players for r in _error_ratios(teaching.belief_errors(j))]
    limit = report.factor + RATIO_TOL
    initial_error = max(float(teaching.belief_errors(j)[0]) for j in players)
    bound = report.steps_to_reach(initial_error, PROP1_TARGET)
    reached = [convergence_after(teaching, j, PROP1_TARGET, 0) for j in players]
    steps = None if any(r is None for r in reached) else max(reached)
    bound_checked = bound is not None and bound <= spec.game.dims.T
    if bound is None:
        logger.warning("prop1: estimates do not contract, no step bound to check")
    elif not bound_checked:
        logger.warning(
            f"prop1: step bound {bound} exceeds the horizon T={spec.game.dims.T}; "
            f"only the per-step contraction is checked"
        )
    within_bound = not bound_checked or (steps is not None and steps <= bound)

    passed = bool(float(report.factor) < 1.0
              and all(r <= limit for r in passive_ratios)
              and all(r <= limit for r in teaching_ratios)
              and within_bound)
    details = {
        'environment': spec.name,
        'alpha': float(spec.estimator.alpha),
        'contraction_factor': float(report.factor),
        'min_eigenvalue': float(report.min_eigenvalue),
        'passive_ratios': passive_ratios,
        'teaching_ratios': teaching_ratios,
        'initial_error': initial_error,
        'steps_bound': bound,
        'bound_checked': bound_checked,
        'teaching_steps': steps,
    }
    logger.info(f"prop1: c={report.factor:.6g}, bound={bound}, teaching steps={steps}, passed={passed}")
    return CheckReport('prop1', passed, details)


def check_prop2(config: ExperimentConfig) -> CheckReport:
    """Cost-to-go Jacobian against the gap between Active and complete-information cost."""
    spec = config.build_environment()
    _require_linear(spec, 'prop2')
    theta_star = spec.theta_star
    plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
    active_model = InteractionModel.active(1.0, 0.0)
    jacobian = cost_to_go_jacobian(spec.game, plan.policies, spec.estimator,
                                   active_model.weights(theta_star), 0, spec.x0)
    norm = float(np.linalg.norm(jacobian))

    initial = spec.initial_state(float(theta_star[0]))
    active = rollout(plan, active_model, theta_star, initial)
    nash = rollout(plan, InteractionModel.complete_info(), theta_star, initial)
    active_cost = active.task_cost(CERTAIN_PLAYER)
    nash_cost = nash.task_cost(CERTAIN_PLAYER)
    gap = nash_cost - active_cost

    passed = norm <= PROP2_JACOBIAN_MIN or gap > PROP2_GAP_MIN
    details = {
        'environment': spec.name,
        'alpha': float(spec.estimator.alpha),
        'jacobian_norm': norm,
        'active_cost': active_cost,
        'nash_cost': nash_cost,
        'cost_gap': gap,
        'hypothesis_holds': norm > PROP2_JACOBIAN_MIN,
    }
    logger.info(f"prop2: |J|={norm:.6g}, gap={gap:.6g}, passed={passed}")
    return CheckReport('prop2', passed, details)


def run_check(proposition: str, config: ExperimentConfig) -> CheckReport:
    """Run a proposition check and write ``<prop>_report.yaml`` to the output directory."""
    if proposition not in PROPOSITIONS:
        raise ConfigError(f"proposition: expected one of {', '.join(PROPOSITIONS)}, got {proposition}",
                          key='proposition')
    report = check_prop1(config) if proposition == 'prop1' else check_prop2(config)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"{proposition}_report.yaml"
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(report.to_dict(), f, sort_keys=False)
    logger.info(f"Wrote {path}")
    return report


# Bench

def bench_environment(spec: EnvironmentSpec, repeats: int = 100) -> Dict[str, Any]:
    """Time one full solve and the teaching-policy evaluation along an Active rollout."""
    theta_star = spec.theta_star
    model = InteractionModel.active(spec.params.rho1, spec.params.rho2)
    initial = spec.initial_state()

    start = time.perf_counter()
    plan = InteractionPlan.solve(spec.game, spec.estimator, spec.x0, theta_star)
    teaching = plan.teaching_policy(model, theta_star, initial)
    solve_seconds = time.perf_counter() - start

    record = rollout(plan, model, theta_star, initial)
    per_action = []
    for t, stage in enumerate(teaching):
        z = np.concatenate([record.states[t], *record.belief_means[:, t]])
        theta = record.theta_schedule[t]
        tick = time.perf_counter()
        for _ in range(repeats):
            stage.act(z, theta)
        per_action.append((time.perf_counter() - tick) / repeats)

    row = {
        'environment': spec.name,
        'solve_seconds': solve_seconds,
        'action_mean_seconds': float(np.mean(per_action)),
        'action_p95_seconds': float(np.percentile(per_action, 95)),
    }
    logger.info(
        f"{spec.name}: solve {solve_seconds:.3f} s, action p95 {row['action_p95_seconds']:.2e} s"
    )
    return row


def run_bench(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Benchmark the configured environment (or ``bench.environments``) and write bench.csv."""
    specs = [config.build_environment()]
    for name in config.bench_environments:
        if name == config.environment:
            continue
        try:
            specs.append(make_environment(name))
        except EnvironmentConfigError as e:
            raise ConfigError(f"bench.environments: {e}", key='bench.environments') from e
    rows = [bench_environment(spec, config.bench_repeats)
            for spec in tqdm(specs, desc='Bench', unit='env', disable=len(specs) == 1)]
    path = Path(config.output_dir) / 'bench.csv'
    artifacts.write_bench_csv(path, rows)
    logger.info(f"Wrote {path}")
    return rows


def experiment_template(name: str) -> Dict[str, Any]:
    """A complete experiment config for ``name`` with every default spelled out."""
    try:
        spec = make_environment(name)
    except EnvironmentConfigError as e:
        raise ConfigError(f"environment.name: {e}", key='environment.name') from e
    defaults = spec.default_config()
    logger.debug(f"{name}: theta is {defaults['intent']}")
    config = ExperimentConfig(environment=defaults['name'], params=defaults['params'])
    return config.to_dict()


