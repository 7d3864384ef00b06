"""Aggregation of multi-seed sweep results into comparison curves.

Cells are (axis value, strategy) pairs holding one RunMetrics per seed;
aggregation produces means with normal-approximation 95% confidence
intervals, and ordering tests ask whether strategies separate beyond CI
overlap at each axis point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .simcore import RunMetrics

__all__ = [
    "SweepResult",
    "CellStats",
    "SweepSummary",
    "METRIC_FIELDS",
    "aggregate",
    "ordering_test",
    "trend_slope",
    "relative_drop",
    "figure_rows",
]

METRIC_FIELDS = ("pdr", "mean_delay", "throughput", "residual_energy_ratio", "power_adjustments")

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SweepResult:
    """Raw sweep output: per axis point, per strategy, one metrics row per seed."""

    axis: str
    points: tuple[tuple[float, Mapping[str, tuple[RunMetrics, ...]]], ...]

    def __post_init__(self) -> None:
        values = [v for v, _ in self.points]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("axis values must be strictly increasing")


@dataclass(frozen=True)
class CellStats:
    mean: float
    std: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class SweepSummary:
    axis: str
    strategies: tuple[str, ...]
    points: tuple[tuple[float, Mapping[str, Mapping[str, CellStats]]], ...]


def _cell(values: Sequence[float]) -> CellStats:
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    half = _Z95 * std / math.sqrt(len(values))
    return CellStats(mean=mean, std=std, ci_lo=mean - half, ci_hi=mean + half)


def aggregate(sweep: SweepResult) -> SweepSummary:
    """Means, stds and 95% CIs per (axis value, strategy, metric) cell."""
    if not sweep.points:
        raise ValueError("sweep has no points")
    strategies = tuple(sweep.points[0][1].keys())
    out = []
    for value, by_strategy in sweep.points:
        if tuple(by_strategy.keys()) != strategies:
            raise ValueError(f"strategy set mismatch at axis value {value!r}")
        cells: dict[str, dict[str, CellStats]] = {}
        for name, runs in by_strategy.items():
            if len(runs) < 2:
                raise ValueError(f"cell ({value!r}, {name!r}) needs at least 2 seeds")
            cells[name] = {
                metric: _cell([getattr(m, metric) for m in runs]) for metric in METRIC_FIELDS
            }
        out.append((value, cells))
    return SweepSummary(axis=sweep.axis, strategies=strategies, points=tuple(out))


def ordering_test(
    summary: SweepSummary,
    metric: str,
    expected_order: Sequence[str],
    *,
    descending: bool = True,
) -> list[bool]:
    """Per axis point: do consecutive pairs separate beyond CI overlap?

    ``expected_order`` lists strategies best first; with ``descending``
    the best is expected to have the larger metric value.
    """
    verdicts = []
    for _, cells in summary.points:
        ok = True
        for better, worse in zip(expected_order, expected_order[1:]):
            a = cells[better][metric]
            b = cells[worse][metric]
            if descending:
                ok = ok and (a.mean > b.mean) and (a.ci_lo > b.ci_hi)
            else:
                ok = ok and (a.mean < b.mean) and (a.ci_hi < b.ci_lo)
        verdicts.append(ok)
    return verdicts


def trend_slope(summary: SweepSummary, metric: str, strategy: str) -> float:
    """Slope of the least-squares line through a strategy's mean curve."""
    xs = np.array([v for v, _ in summary.points], dtype=float)
    ys = np.array([cells[strategy][metric].mean for _, cells in summary.points])
    return float(np.polyfit(xs, ys, 1)[0])


def relative_drop(summary: SweepSummary, metric: str, strategy: str) -> float:
    """Relative fall of a strategy's mean from the first to the last point."""
    first = summary.points[0][1][strategy][metric].mean
    last = summary.points[-1][1][strategy][metric].mean
    if first == 0:
        return 0.0
    return (first - last) / first


def figure_rows(summary: SweepSummary, metric: str) -> list[tuple]:
    """CSV-ready rows (axis, strategy, mean, std, ci_lo, ci_hi)."""
    rows = []
    for value, cells in summary.points:
        for name in summary.strategies:
            c = cells[name][metric]
            rows.append((value, name, c.mean, c.std, c.ci_lo, c.ci_hi))
    return rows
