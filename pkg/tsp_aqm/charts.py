"""
SVG line charts for sweep results

Charts are a convenience next to the CSV files. They are drawn with the Agg
backend and written without timestamps or random ids, so the same rows give
the same file.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import matplotlib

matplotlib.use('Agg')
matplotlib.rcParams.update({
    'svg.hashsalt': 'tsp-aqm',
    'svg.fonttype': 'none',
    'axes.unicode_minus': False,
})
import matplotlib.pyplot as plt  # noqa: E402


logger = logging.getLogger(__name__)

AXIS_LABELS = {
    'lambda_nrt': 'NRT arrival rate',
    'threshold_r': 'RT threshold R',
}

METRIC_LABELS = {
    'p_lrt': 'RT loss probability',
    'n_rt': 'Mean RT packets',
    'n_nrt': 'Mean NRT packets',
    'd_rt': 'Mean RT delay',
    'd_nrt_paper': 'Mean NRT delay',
    'd_nrt_little': 'Mean NRT delay (class Little)',
    'lambda_eff': 'Admitted NRT rate',
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info(f"Wrote chart {path}")
    return path


def plot_sweep(rows: Sequence[Any], axis: str, metrics: Sequence[str], path: Union[str, Path],
               title: str = '') -> Path:
    """
    One panel per metric, one line per policy

    Args:
        rows: ResultRow sequence from a sweep
        axis: 'lambda_nrt' or 'threshold_r'
        metrics: Row attributes to plot
        path: Output SVG file
        title: Figure title

    Returns:
        Path written
    """
    column = 'r' if axis == 'threshold_r' else 'lambda_nrt'
    by_policy: Dict[str, List[Any]] = {}
    for row in rows:
        by_policy.setdefault(row.policy, []).append(row)

    fig, axes = plt.subplots(1, len(metrics), figsize=(5.5 * len(metrics), 4.0), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for policy, policy_rows in by_policy.items():
            ordered = sorted(policy_rows, key=lambda row: getattr(row, column))
            ax.plot(
                [getattr(row, column) for row in ordered],
                [getattr(row, metric) for row in ordered],
                marker='o',
                label=policy,
            )
        ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.grid(True, alpha=0.3)
        ax.legend(loc='best', fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_crossover_map(per_r: Sequence[Dict[str, Any]], path: Union[str, Path], title: str = '') -> Path:
    """Estimated crossover lambda_nrt against R; R values without a crossover are left out"""
    points = [(item['r'], crossover['estimate']) for item in per_r for crossover in item['crossovers']]

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    if points:
        ax.plot([r for r, _ in points], [estimate for _, estimate in points], marker='s', linestyle='none')
    ax.set_xlabel(AXIS_LABELS['threshold_r'])
    ax.set_ylabel('Crossover NRT arrival rate')
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, Path(path))
