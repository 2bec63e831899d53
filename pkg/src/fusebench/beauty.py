"""Beauty-score distribution analysis: per-filter statistics, distance and KDE."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fusebench import svg
from fusebench.errors import DegenerateError, DomainError
from fusebench.scores import BONAFIDE, ScoreTable

DEFAULT_GRID_SIZE = 256


@dataclass(frozen=True)
class FilterStats:
    filter: str
    mean: float
    std_dev: float
    distance: float
    count: int = 0


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def _nonempty(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError(f"{name} must be non-empty")
    return arr


def beauty_distance(filtered_scores, bonafide_scores) -> float:
    """Mean beauty score of the filtered set minus that of the bona fide set (signed)."""
    filtered = _nonempty(filtered_scores, "filtered_scores")
    bonafide = _nonempty(bonafide_scores, "bonafide_scores")
    return float(np.mean(filtered) - np.mean(bonafide))


def filter_stats(table: ScoreTable, source: str, ddof: int = 0) -> list[FilterStats]:
    """Mean, standard deviation and distance to bona fide for every filter of ``source``.

    ``ddof=0`` gives the population standard deviation. Rows are sorted by
    distance, ties broken by filter name; the bona fide row has distance 0.
    """
    recs = table.for_source(source)
    groups: dict[str, list[float]] = {}
    for r in recs:
        groups.setdefault(r.filter, []).append(r.score)
    if BONAFIDE not in groups:
        raise DomainError(f"source {source!r} has no bona fide scores")
    bona = np.array(groups[BONAFIDE])
    rows = []
    for name, values in groups.items():
        arr = np.array(values)
        if arr.size <= ddof:
            raise DomainError(f"filter {name!r} has too few scores for ddof={ddof}")
        dist = 0.0 if name == BONAFIDE else beauty_distance(arr, bona)
        rows.append(FilterStats(name, float(arr.mean()), float(arr.std(ddof=ddof)), dist, int(arr.size)))
    rows.sort(key=lambda s: (s.distance, s.filter))
    return rows


def write_stats_csv(rows: Sequence[FilterStats], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filter", "mean", "std_dev", "distance"])
        for s in rows:
            w.writerow([s.filter, repr(s.mean), repr(s.std_dev), repr(s.distance)])


def silverman_bandwidth(scores) -> float:
    x = np.asarray(scores, dtype=float).ravel()
    sigma = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return 0.9 * spread * x.size ** (-0.2)


def kde(scores, grid_size: int = DEFAULT_GRID_SIZE) -> KdeCurve:
    """Gaussian KDE with Silverman's bandwidth on ``grid_size`` points over [min - 4h, max + 4h]."""
    x = _nonempty(scores, "scores")
    if np.unique(x).size < 2:
        raise DegenerateError("KDE needs at least two distinct scores")
    if grid_size < 2:
        raise DomainError("grid_size must be >= 2")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, grid_size)
    with np.errstate(divide="ignore", over="ignore"):
        norm = 1.0 / (x.size * h * np.sqrt(2 * np.pi))
    if not (np.isfinite(norm) and np.isfinite(grid).all()) or grid[0] == grid[-1]:
        raise DegenerateError(f"bandwidth {h:g} is too small to represent the density")
    density = np.empty(grid_size)
    chunk = max(1, 2_000_000 // x.size)
    # far-away pairs overflow z to inf, and exp(-inf) = 0 is the right limit
    with np.errstate(over="ignore"):
        for start in range(0, grid_size, chunk):
            z = (grid[start:start + chunk, None] - x[None, :]) / h
            density[start:start + chunk] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return KdeCurve(grid, density, float(h))


def emit_kde_plot(curves: Sequence[tuple[str, KdeCurve]], path: str | os.PathLike,
                  xlabel: str = "score") -> tuple[str, str]:
    """Write the KDE curves as an SVG (one ``<path>`` per curve) plus a CSV sidecar."""
    if not curves:
        raise DomainError("need at least one KDE curve")
    path = os.fspath(path)
    xmin = min(float(c.grid[0]) for _, c in curves)
    xmax = max(float(c.grid[-1]) for _, c in curves)
    ymax = max(float(c.density.max()) for _, c in curves) * 1.05 or 1.0
    xticks = [(float(v), f"{v:.3g}") for v in np.linspace(xmin, xmax, 6)]
    yticks = [(float(v), f"{v:.3g}") for v in np.linspace(0.0, ymax, 5)]
    doc = svg.line_plot(
        [(name, c.grid, c.density) for name, c in curves],
        xlim=(xmin, xmax), ylim=(0.0, ymax), xlabel=xlabel, ylabel="density",
        title="Score density (KDE)", xticks=xticks, yticks=yticks, kind="path",
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    csv_path = os.path.splitext(path)[0] + ".csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "x", "density", "bandwidth"])
        for name, c in curves:
            for gx, d in zip(c.grid, c.density):
                w.writerow([name, repr(float(gx)), repr(float(d)), repr(c.bandwidth)])
    return path, csv_path
