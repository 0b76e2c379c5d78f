"""CSV and plot files written by experiments."""

import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulation import RolloutRecord  # noqa: E402


logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ('model', 'theta_star', 'ratio', 'player', 'regret',
                   'time_to_convergence', 'final_belief_error')
BENCH_COLUMNS = ('environment', 'solve_seconds', 'action_mean_seconds', 'action_p95_seconds')

plt.rcParams['svg.hashsalt'] = 'intentgames'


def format_float(value: Optional[float]) -> str:
    """17 significant digits, empty for missing values."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), '.17g')


def rollout_columns(record: RolloutRecord) -> List[str]:
    """Column order: t, states, per-player controls, beliefs, per-player stage costs."""
    columns = ['t']
    columns += [f'x{k}' for k in range(record.states.shape[1])]
    for i, u in enumerate(record.controls):
        columns += [f'u_p{i + 1}_{k}' for k in range(u.shape[1])]
    if record.belief_means is not None:
        for j in range(record.belief_means.shape[0]):
            p = record.belief_means.shape[2]
            columns += [f'mean_p{j + 2}_{k}' for k in range(p)]
            if record.belief_covariances is not None:
                columns += [f'var_p{j + 2}_{k}' for k in range(p)]
    columns += [f'cost_p{i + 1}' for i in range(record.num_players)]
    return columns


def _rollout_rows(record: RolloutRecord):
    T = record.horizon
    for t in range(T + 1):
        row: List[Any] = [t]
        row += list(record.states[t])
        for u in record.controls:
            row += list(u[t]) if t < T else [None] * u.shape[1]
        if record.belief_means is not None:
            for j in range(record.belief_means.shape[0]):
                row += list(record.belief_means[j, t])
                if record.belief_covariances is not None:
                    row += list(np.diag(record.belief_covariances[j, t]))
        row += list(record.stage_costs[:, t])
        yield row


def write_rollout_csv(path: Path, record: RolloutRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(rollout_columns(record))
        for row in _rollout_rows(record):
            writer.writerow([format_float(v) for v in row])
    logger.debug(f"Wrote rollout {path}")


def read_rollout_csv(path: Path) -> Dict[str, np.ndarray]:
    """Columns of a rollout CSV as float arrays (missing entries are NaN)."""
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) if v != '' else np.nan for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_summary_csv(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    _write_table(path, SUMMARY_COLUMNS, rows)


def write_bench_csv(path: Path, rows: Sequence[Mapping[str, Any]]) -> None:
    _write_table(path, BENCH_COLUMNS, rows)


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([
                row.get(c) if isinstance(row.get(c), str) else format_float(row.get(c))
                for c in columns
            ])


def read_summary_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def _save(fig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.debug(f"Wrote plot {path}")


def plot_belief_errors(path: Path, records: Mapping[str, RolloutRecord], player: int = 1) -> None:
    """Belief error of one uncertain player against time, one line per model."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, record in records.items():
        if record.belief_means is None:
            continue
        ax.plot(np.arange(record.horizon + 1), record.belief_errors(player), label=label)
    ax.set_xlabel('t')
    ax.set_ylabel(f'belief error of player {player + 1}')
    ax.set_yscale('symlog', linthresh=1e-3)
    ax.grid(True, alpha=0.3)
    if ax.lines:
        ax.legend()
    _save(fig, path)


def plot_regret(path: Path, rows: Sequence[Mapping[str, Any]], player: int = 1) -> None:
    """Regret of one player against the true intent, one line per model."""
    fig, ax = plt.subplots(figsize=(6, 4))
    series: Dict[str, List] = {}
    for row in rows:
        if row['player'] == player and row.get('regret') is not None:
            series.setdefault(row['model'], []).append((row['theta_star'], row['regret']))
    for label, points in series.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker='o', label=label)
    ax.set_xlabel('theta*')
    ax.set_ylabel(f'regret of player {player}')
    ax.grid(True, alpha=0.3)
    if ax.lines:
        ax.legend()
    _save(fig, path)
