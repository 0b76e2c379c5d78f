"""Command-line interface for intent demonstration experiments."""

import logging
import os
import sys
from pathlib import Path
from typing import Callable, Optional, TypeVar

import click
from dotenv import load_dotenv
import yaml

from .environments import ENVIRONMENTS
from .estimation import EstimationError
from .ilq_games import ILQDivergenceError
from .intent_demo import IntentDemoError
from .lq_nash import NashSolverError
from .simulation import SimulationError
from .workflow import (
    ENV_PREFIX,
    PROPOSITIONS,
    ConfigError,
    ExperimentConfig,
    apply_env_overrides,
    experiment_template,
    run_bench,
    run_check,
    run_experiment,
)

# Logger for CLI
logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
SOLVER_ERRORS = (NashSolverError, ILQDivergenceError, IntentDemoError, SimulationError,
                 EstimationError)
DEFAULT_CONFIGS = ('intentgames.yaml', 'intentgames.yml')

T = TypeVar('T')


def setup_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Set up logging configuration.

    Args:
        verbose: Enable debug logging
        log_file: Optional log file path
    """
    level_name = os.environ.get(f'{ENV_PREFIX}LOG_LEVEL', 'INFO').upper()
    level = logging.DEBUG if verbose else getattr(logging, level_name, logging.INFO)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(level)

    root = logging.getLogger()
    for handler in [h for h in root.handlers if getattr(h, '_intentgames', False)]:
        root.removeHandler(handler)
        handler.close()
    console_handler._intentgames = True
    root.setLevel(logging.DEBUG if log_file else level)
    root.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        file_handler.setLevel(logging.DEBUG)
        file_handler._intentgames = True
        root.addHandler(file_handler)

    # matplotlib is chatty at DEBUG
    logging.getLogger('matplotlib').setLevel(logging.WARNING)


def _guarded(action: Callable[[], T]) -> T:
    """Run ``action`` and turn known failures into exit codes."""
    try:
        return action()
    except ConfigError as e:
        click.echo(f"Configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except SOLVER_ERRORS as e:
        click.echo(f"Solver error: {e}", err=True)
        sys.exit(EXIT_SOLVER)


def _load_config(ctx, config_path: Optional[str] = None, out: Optional[str] = None,
                  seed: Optional[int] = None, threads: Optional[int] = None) -> ExperimentConfig:
    """Config file, then INTENTGAMES_* variables, then command-line flags.

    A ``--config`` given to the subcommand wins over the one given to the group.
    """
    if config_path is None:
        config_path = ctx.obj.get('config_path')
    if config_path is None:
        config_path = next((c for c in DEFAULT_CONFIGS if Path(c).exists()), None)
    if config_path:
        config = ExperimentConfig.from_yaml(config_path)
        click.echo(f"Using config file: {config_path}")
    else:
        click.echo("No config file given; using defaults")
        config = ExperimentConfig()
    config = apply_env_overrides(config)
    return config.with_overrides(seed=seed, threads=threads, output_dir=out)


def config_option(command):
    """Accept ``--config`` on a subcommand as well as on the group."""
    return click.option('--config', '-c', 'config_path',
                        type=click.Path(exists=True),
                        help='Path to experiment configuration file')(command)


@click.group()
@click.option('--config', '-c',
              type=click.Path(exists=True),
              help='Path to experiment configuration file')
@click.option('--verbose', '-v', is_flag=True,
              help='Enable verbose logging')
@click.option('--log-file', type=click.Path(),
              help='Log file path')
@click.pass_context
def cli(ctx, config: Optional[str], verbose: bool, log_file: Optional[str]):
    """intentgames: intent demonstration in general-sum dynamic games."""
    setup_logging(verbose, log_file)
    ctx.ensure_object(dict)
    ctx.obj['config_path'] = config


@cli.command()
@config_option
@click.option('--out', '-o', type=click.Path(), help='Output directory')
@click.option('--seed', type=click.IntRange(min=0), help='Actuation-noise seed')
@click.option('--threads', type=click.IntRange(min=1), help='Worker threads for the sweep')
@click.pass_context
def run(ctx, config_path: Optional[str], out: Optional[str], seed: Optional[int],
        threads: Optional[int]):
    """Run the configured experiment and write CSVs and plots."""

    def action():
        config = _load_config(ctx, config_path, out, seed, threads)
        return run_experiment(config)

    result = _guarded(action)
    click.echo(f"Wrote {len(result.files)} files to {result.output_dir}")


@cli.command()
@click.argument('proposition', type=click.Choice(PROPOSITIONS))
@config_option
@click.option('--out', '-o', type=click.Path(), help='Output directory for the report')
@click.pass_context
def check(ctx, proposition: str, config_path: Optional[str], out: Optional[str]):
    """Check PROPOSITION on a linear-quadratic environment."""

    def action():
        return run_check(proposition, _load_config(ctx, config_path, out))

    report = _guarded(action)
    click.echo(yaml.safe_dump(report.to_dict(), sort_keys=False).rstrip())
    if report.passed:
        click.echo(f"{proposition}: PASS")
    else:
        click.echo(f"{proposition}: FAIL", err=True)
        sys.exit(EXIT_CHECK_FAILED)


@cli.command()
@config_option
@click.option('--out', '-o', type=click.Path(), help='Output directory')
@click.pass_context
def bench(ctx, config_path: Optional[str], out: Optional[str]):
    """Time full solves and teaching-policy action evaluation."""

    def action():
        return run_bench(_load_config(ctx, config_path, out))

    rows = _guarded(action)
    for row in rows:
        click.echo(
            f"{row['environment']}: solve {row['solve_seconds']:.3f} s, "
            f"action mean {row['action_mean_seconds']:.2e} s, "
            f"p95 {row['action_p95_seconds']:.2e} s"
        )


@cli.command('print-config')
@click.argument('environment', type=click.Choice(sorted(ENVIRONMENTS)))
@click.option('--params-only', is_flag=True, help='Print only the environment defaults')
def print_config(environment: str, params_only: bool):
    """Print the defaults of ENVIRONMENT as YAML."""
    data = _guarded(lambda: experiment_template(environment))
    if params_only:
        data = data['environment']['params']
    click.echo(yaml.safe_dump(data, sort_keys=False).rstrip())


def main():
    """Main entry point."""
    load_dotenv()
    cli()


if __name__ == '__main__':
    main()
