"""APCER / BPCER, detection equal error rate and DET curves.

Decision convention throughout: a score at or above the threshold is
classified as an attack (retouched); higher scores mean "more likely retouched".

* APCER: fraction of attack scores strictly below the threshold.
* BPCER: fraction of bona fide scores at or above the threshold.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from fusebench import svg
from fusebench.errors import DomainError
from fusebench.scores import BONAFIDE, Label, ScoreTable

DET_AXIS_MIN = 0.001


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    apcer: float
    bpcer: float


@dataclass(frozen=True)
class DetCurve:
    points: tuple[OperatingPoint, ...]
    deer: float
    deer_threshold: float

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([p.threshold for p in self.points])

    @property
    def apcer(self) -> np.ndarray:
        return np.array([p.apcer for p in self.points])

    @property
    def bpcer(self) -> np.ndarray:
        return np.array([p.bpcer for p in self.points])


def _as_scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def classification_errors(attack_scores, bonafide_scores, threshold: float) -> OperatingPoint:
    attack = _as_scores(attack_scores, "attack_scores")
    bonafide = _as_scores(bonafide_scores, "bonafide_scores")
    n_missed = int(np.count_nonzero(attack < threshold))
    n_false = int(np.count_nonzero(bonafide >= threshold))
    return OperatingPoint(float(threshold), n_missed / attack.size, n_false / bonafide.size)


def candidate_thresholds(attack: np.ndarray, bonafide: np.ndarray) -> np.ndarray:
    """Distinct score values, midpoints between neighbours, and -inf/+inf sentinels, ascending."""
    values = np.unique(np.concatenate([attack, bonafide]))
    mids = (values[:-1] + values[1:]) / 2.0
    # midpoints sit strictly between neighbours except when they are 1 ulp apart
    merged = np.unique(np.concatenate([values, mids]))
    return np.concatenate([[-np.inf], merged, [np.inf]])


def _sweep(attack: np.ndarray, bonafide: np.ndarray):
    thresholds = candidate_thresholds(attack, bonafide)
    a_sorted = np.sort(attack)
    b_sorted = np.sort(bonafide)
    n_missed = np.searchsorted(a_sorted, thresholds, side="left")
    n_false = b_sorted.size - np.searchsorted(b_sorted, thresholds, side="left")
    apcer = n_missed / a_sorted.size
    bpcer = n_false / b_sorted.size
    return thresholds, apcer, bpcer


def _deer_index(apcer: np.ndarray, bpcer: np.ndarray) -> int:
    # argmin returns the first minimum, i.e. the smallest threshold among ties
    return int(np.argmin(np.abs(apcer - bpcer)))


def deer(attack_scores, bonafide_scores) -> tuple[float, float]:
    """Empirical D-EER and the threshold it was read at.

    Sweeps the exact candidate set on which the empirical error step functions
    can change and returns ``(apcer + bpcer) / 2`` at the candidate with the
    smallest ``|apcer - bpcer|`` (earliest threshold on ties). No interpolation.
    """
    attack = _as_scores(attack_scores, "attack_scores")
    bonafide = _as_scores(bonafide_scores, "bonafide_scores")
    thresholds, apcer, bpcer = _sweep(attack, bonafide)
    i = _deer_index(apcer, bpcer)
    return float((apcer[i] + bpcer[i]) / 2.0), float(thresholds[i])


def det_curve(attack_scores, bonafide_scores) -> DetCurve:
    attack = _as_scores(attack_scores, "attack_scores")
    bonafide = _as_scores(bonafide_scores, "bonafide_scores")
    thresholds, apcer, bpcer = _sweep(attack, bonafide)
    i = _deer_index(apcer, bpcer)
    points = tuple(
        OperatingPoint(float(t), float(a), float(b)) for t, a, b in zip(thresholds, apcer, bpcer)
    )
    return DetCurve(points, float((apcer[i] + bpcer[i]) / 2.0), float(thresholds[i]))


def per_filter_deer(table: ScoreTable, source: str) -> dict[str, float]:
    """D-EER of every attack filter against the full bona fide pool of ``source``."""
    recs = table.for_source(source)
    bonafide = np.array([r.score for r in recs if r.label is Label.BONAFIDE])
    if bonafide.size == 0:
        raise DomainError(f"source {source!r} has no bona fide records")
    by_filter: dict[str, list[float]] = {}
    for r in recs:
        if r.filter != BONAFIDE:
            by_filter.setdefault(r.filter, []).append(r.score)
    if not by_filter:
        raise DomainError(f"source {source!r} has no attack filters")
    return {f: deer(by_filter[f], bonafide)[0] for f in sorted(by_filter)}


def average_deer(table: ScoreTable, fused_source: str) -> float:
    """Mean of per-filter D-EERs; the same bona fide pool is reused for every filter."""
    values = per_filter_deer(table, fused_source)
    return float(sum(values.values()) / len(values))


def _deviate(p: np.ndarray) -> np.ndarray:
    nd = NormalDist()
    clipped = np.clip(p, DET_AXIS_MIN, 1.0 - DET_AXIS_MIN)
    return np.array([nd.inv_cdf(float(v)) for v in clipped])


DET_TICKS = (0.001, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99)


def emit_det_plot(curves: Sequence[tuple[str, DetCurve]], path: str | os.PathLike) -> tuple[str, str]:
    """Write a DET plot (SVG, normal-deviate axes) plus a CSV of the raw points.

    Returns the two written paths. The CSV sits next to the SVG with a
    ``.csv`` suffix and has columns ``curve,threshold,apcer,bpcer``.
    """
    if not curves:
        raise DomainError("need at least one curve")
    path = os.fspath(path)
    series = []
    for name, curve in curves:
        x = _deviate(curve.apcer)
        y = _deviate(curve.bpcer)
        series.append((name, x, y))
    lim = float(NormalDist().inv_cdf(1.0 - DET_AXIS_MIN))
    ticks = [(float(NormalDist().inv_cdf(t)), f"{100 * t:g}") for t in DET_TICKS]
    doc = svg.line_plot(
        series,
        xlim=(-lim, lim),
        ylim=(-lim, lim),
        xlabel="APCER (%)",
        ylabel="BPCER (%)",
        xticks=ticks,
        yticks=ticks,
        title="DET curve",
        kind="polyline",
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc)
    csv_path = os.path.splitext(path)[0] + ".csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "threshold", "apcer", "bpcer"])
        for name, curve in curves:
            for p in curve.points:
                w.writerow([name, repr(p.threshold), repr(p.apcer), repr(p.bpcer)])
    return path, csv_path
