"""Powell's direction-set method and fusion-weight fitting on average D-EER.

The objective for fusion (average D-EER of the renormalised weighted sum) is a
step function of the weights, so the line search is derivative free: outward
bracketing by doubling in both directions, then golden-section refinement. A
probe that exactly ties the current value is a plateau rather than evidence of
a minimum, so the bracket keeps doubling across it (a bounded number of times)
until the value changes. On a flat stretch the golden-section search collapses
onto the middle of the interval, which keeps the optimiser deterministic.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fusebench.errors import DomainError, FusebenchError
from fusebench.fusion import FusionConfig, _empirical_map, normalized_matrix, weighted_sum
from fusebench.metrics import deer
from fusebench.scores import BONAFIDE, ScoreTable, SourceRange

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...
MAX_BRACKET_DOUBLINGS = 60
PLATEAU_DOUBLINGS = 8


@dataclass(frozen=True)
class PowellSettings:
    max_iterations: int = 100
    objective_tolerance: float = 1e-6
    line_search_tolerance: float = 1e-5
    initial_bracket_halfwidth: float = 1.0
    # "oldest": drop the first direction every iteration (quadratic termination);
    # "largest_decrease": Powell's safeguarded swap of the best-performing direction.
    update_rule: str = "oldest"

    def __post_init__(self) -> None:
        if self.update_rule not in ("oldest", "largest_decrease"):
            raise DomainError(f"unknown update_rule {self.update_rule!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations must be an integer >= 1")
        for name in ("objective_tolerance", "line_search_tolerance", "initial_bracket_halfwidth"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive, got {v}")


@dataclass
class OptimizationTrace:
    iterations: list[tuple[tuple[float, ...], float]] = field(default_factory=list)
    final_weights: tuple[float, ...] = ()
    final_objective: float = math.nan
    evaluations: int = 0
    converged: bool = False

    def objectives(self) -> list[float]:
        return [f for _, f in self.iterations]


class OptimizationAborted(FusebenchError):
    """The objective returned a non-finite value; ``trace`` holds progress so far."""

    def __init__(self, message: str, trace: OptimizationTrace):
        super().__init__(message)
        self.trace = trace


class _Counted:
    def __init__(self, fn: Callable[[np.ndarray], float], trace: OptimizationTrace):
        self.fn = fn
        self.trace = trace

    def __call__(self, x: np.ndarray) -> float:
        self.trace.evaluations += 1
        v = float(self.fn(np.array(x, dtype=float)))
        if not math.isfinite(v):
            raise OptimizationAborted(f"objective returned {v} at {list(np.round(x, 6))}", self.trace)
        return v


def _golden(phi: Callable[[float], float], a: float, c: float, tol: float,
            evaluated: dict[float, float]) -> float:
    """Golden-section search on ``[a, c]``; returns the final interval midpoint.

    On equal interior values the interval shrinks to the inner pair, so a flat
    objective converges to the centre of the starting interval.
    """
    x1 = c - GOLDEN * (c - a)
    x2 = a + GOLDEN * (c - a)
    f1, f2 = phi(x1), phi(x2)
    evaluated[x1], evaluated[x2] = f1, f2
    while c - a > tol:
        if f1 < f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - GOLDEN * (c - a)
            f1 = evaluated[x1] = phi(x1)
        elif f2 < f1:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (c - a)
            f2 = evaluated[x2] = phi(x2)
        else:
            a, c = x1, x2
            x1 = c - GOLDEN * (c - a)
            x2 = a + GOLDEN * (c - a)
            f1, f2 = phi(x1), phi(x2)
            evaluated[x1], evaluated[x2] = f1, f2
    return 0.5 * (a + c)


def _parabolic_vertex(evaluated: dict[float, float], lo: float, hi: float) -> float | None:
    """Vertex of the parabola through the three lowest evaluated points, if it is a minimum in [lo, hi]."""
    pts = sorted(evaluated.items(), key=lambda kv: (kv[1], kv[0]))[:3]
    if len(pts) < 3:
        return None
    (a, fa), (b, fb), (c, fc) = pts
    den = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    num = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    # second divided difference: positive curvature means the vertex is a minimum
    curv = ((fc - fb) / (c - b) - (fb - fa) / (b - a)) / (c - a)
    if den == 0.0 or not curv > 0.0:
        return None
    t = b - 0.5 * num / den
    if not (lo <= t <= hi) or not math.isfinite(t):
        return None
    return t


def line_minimize(f: Callable[[np.ndarray], float], point: np.ndarray, direction: np.ndarray,
                  f0: float, settings: PowellSettings) -> tuple[np.ndarray, float]:
    """Minimise ``f`` along ``point + t * direction``; never returns a worse value than ``f0``."""

    def phi(t: float) -> float:
        return f(point + t * direction)

    h = settings.initial_bracket_halfwidth
    evaluated = {0.0: f0}
    # Per side: the last probe still on the plateau of f0, and the first probe off it.
    reach = {}
    for sign in (1.0, -1.0):
        last, t = 0.0, sign * h
        evaluated[t] = phi(t)
        for _ in range(PLATEAU_DOUBLINGS):
            if evaluated[t] != f0:
                break
            last, t = t, 2.0 * t
            evaluated[t] = phi(t)
        reach[sign] = (last, t)
    best_sign = min((1.0, -1.0), key=lambda s: (evaluated[reach[s][1]], -s))
    if evaluated[reach[best_sign][1]] >= f0:
        lo, hi = -h, h
    else:
        prev, cur = reach[best_sign]
        nxt = 2.0 * cur
        evaluated[nxt] = phi(nxt)
        doublings = 0
        while evaluated[nxt] < evaluated[cur] and doublings < MAX_BRACKET_DOUBLINGS:
            prev, cur = cur, nxt
            nxt = 2.0 * cur
            evaluated[nxt] = phi(nxt)
            doublings += 1
        lo, hi = sorted((prev, nxt))
    t_mid = _golden(phi, lo, hi, settings.line_search_tolerance, evaluated)
    f_mid = evaluated[t_mid] if t_mid in evaluated else phi(t_mid)
    evaluated[t_mid] = f_mid
    t_par = _parabolic_vertex(evaluated, lo, hi)
    if t_par is not None and t_par not in evaluated:
        evaluated[t_par] = phi(t_par)
    best_t = min(evaluated, key=lambda t: (evaluated[t], abs(t - t_mid)))
    if f_mid <= evaluated[best_t]:
        best_t, best_f = t_mid, f_mid
    else:
        best_f = evaluated[best_t]
    if best_f >= f0:
        return point, f0
    return point + best_t * direction, best_f


def powell_minimize(objective: Callable[[np.ndarray], float], initial: Sequence[float],
                    settings: PowellSettings | None = None,
                    directions: Sequence[Sequence[float]] | None = None) -> OptimizationTrace:
    """Minimise ``objective`` with Powell's conjugate-direction method.

    Each iteration line-minimises along every direction in turn, then adds the
    iteration's net displacement as a new direction and searches along it.
    With ``update_rule="oldest"`` the first direction is dropped, which makes
    the method terminate on an N-dimensional quadratic within N iterations.
    With ``"largest_decrease"`` the displacement replaces the direction of the
    largest single decrease, and only when Powell's test says the set stays
    well conditioned. Stops when one iteration improves the objective by less
    than ``objective_tolerance`` or after ``max_iterations``.
    """
    settings = settings or PowellSettings()
    x = np.array(initial, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise DomainError("cannot optimise over an empty weight vector")
    if directions is None:
        dirs = [row for row in np.eye(n)]
    else:
        dirs = [np.array(d, dtype=float) for d in directions]
        if len(dirs) != n or any(d.shape != (n,) for d in dirs):
            raise DomainError(f"need {n} initial directions of length {n}")
        dirs = [d / np.linalg.norm(d) for d in dirs]

    trace = OptimizationTrace()
    f = _Counted(objective, trace)
    fx = f(x)
    trace.iterations.append((tuple(float(v) for v in x), float(fx)))

    for it in range(1, settings.max_iterations + 1):
        x_start, f_start = x.copy(), fx
        biggest_drop, biggest_i = 0.0, 0
        for i, d in enumerate(dirs):
            before = fx
            x, fx = line_minimize(f, x, d, fx, settings)
            if before - fx > biggest_drop:
                biggest_drop, biggest_i = before - fx, i
        displacement = x - x_start
        step = float(np.linalg.norm(displacement))
        if step > 0.0:
            new_dir = displacement / step
            if settings.update_rule == "oldest":
                dirs = dirs[1:] + [new_dir]
                x, fx = line_minimize(f, x, new_dir, fx, settings)
            else:
                f_ext = f(2.0 * x - x_start)
                if f_ext < f_start:
                    t = (2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - biggest_drop) ** 2
                         - biggest_drop * (f_start - f_ext) ** 2)
                    if t < 0.0:
                        x, fx = line_minimize(f, x, new_dir, fx, settings)
                        dirs[biggest_i] = dirs[-1]
                        dirs[-1] = new_dir
        trace.iterations.append((tuple(float(v) for v in x), float(fx)))
        log.debug("powell iteration %d: objective %.6g", it, fx)
        if f_start - fx < settings.objective_tolerance:
            trace.converged = True
            break

    trace.final_weights = tuple(float(v) for v in x)
    trace.final_objective = fx
    return trace


class FusionObjective:
    """Average D-EER of the fused score as a function of the weight vector.

    Accepts one table or several (e.g. one per leave-one-filter-out fold); with
    several, the objective is the mean of their average D-EERs. Normalised
    score matrices are computed once up front.
    """

    def __init__(self, tables: ScoreTable | Sequence[ScoreTable], config: FusionConfig):
        if isinstance(tables, ScoreTable):
            tables = [tables]
        if not tables:
            raise DomainError("no tables to fit on")
        self.config = config
        self.parts = []
        for table in tables:
            _, Xn, filters, _ = normalized_matrix(table, config)
            filters = np.array(filters, dtype=object)
            bona = filters == BONAFIDE
            attack_filters = sorted(set(filters[~bona]))
            if not bona.any() or not attack_filters:
                raise DomainError("each fitting table needs bona fide records and at least one attack filter")
            masks = [filters == name for name in attack_filters]
            self.parts.append((Xn, bona, masks))

    def fused(self, weights: Sequence[float]):
        for Xn, bona, masks in self.parts:
            raw = weighted_sum(Xn, weights)
            fused, _, _ = _empirical_map(raw, 0.0, 1.0, allow_constant=True)
            yield fused, bona, masks

    def __call__(self, weights: Sequence[float]) -> float:
        per_table = []
        for fused, bona, masks in self.fused(weights):
            bona_scores = fused[bona]
            per_table.append(sum(deer(fused[m], bona_scores)[0] for m in masks) / len(masks))
        return float(sum(per_table) / len(per_table))


def fit_fusion(tables: ScoreTable | Sequence[ScoreTable], sources: Sequence[str],
               settings: PowellSettings | None = None,
               source_ranges: Sequence[SourceRange] = (),
               target_range: tuple[float, float] = (0.0, 1.0)) -> tuple[FusionConfig, OptimizationTrace]:
    """Fit fusion weights by Powell's method, starting from equal weights ``1/N``.

    Returns the calibrated config (weights, stored renormalisation range and
    the D-EER threshold of the pooled fused scores) and the optimisation trace.
    """
    sources = tuple(sources)
    if not sources:
        raise DomainError("need at least one source to fuse")
    wanted = set(sources)
    ranges = tuple(r for r in source_ranges if r.source in wanted)
    base = FusionConfig(sources, (1.0 / len(sources),) * len(sources), ranges, target_range)
    objective = FusionObjective(tables, base)
    trace = powell_minimize(objective, base.weights, settings)
    weights = trace.final_weights

    raws, bona_parts = [], []
    for Xn, bona, _ in objective.parts:
        raws.append(weighted_sum(Xn, weights))
        bona_parts.append(bona)
    raw_all = np.concatenate(raws)
    lo, hi = float(raw_all.min()), float(raw_all.max())
    fused_all, _, _ = _empirical_map(raw_all, 0.0, 1.0, allow_constant=True)
    bona_all = np.concatenate(bona_parts)
    _, threshold = deer(fused_all[~bona_all], fused_all[bona_all])
    config = FusionConfig(sources, weights, ranges, target_range,
                          calibrated_threshold=threshold, fused_renorm_min=lo, fused_renorm_max=hi)
    return config, trace


def fit_fusion_weights(table: ScoreTable | Sequence[ScoreTable], sources: Sequence[str],
                       settings: PowellSettings | None = None,
                       source_ranges: Sequence[SourceRange] = (),
                       target_range: tuple[float, float] = (0.0, 1.0)) -> FusionConfig:
    return fit_fusion(table, sources, settings, source_ranges, target_range)[0]


def write_trace(trace: OptimizationTrace, path: str | os.PathLike, settings: PowellSettings,
                sources: Sequence[str] | None = None) -> None:
    """Trace CSV ``iteration,objective,w_1..w_N`` preceded by ``#`` settings lines."""
    n = len(trace.final_weights) or (len(trace.iterations[0][0]) if trace.iterations else 0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# powell update_rule={settings.update_rule} max_iterations={settings.max_iterations} "
                 f"objective_tolerance={settings.objective_tolerance!r} "
                 f"line_search_tolerance={settings.line_search_tolerance!r} "
                 f"initial_bracket_halfwidth={settings.initial_bracket_halfwidth!r}\n")
        if sources is not None:
            fh.write("# sources=" + ",".join(sources) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"] + [f"w_{i + 1}" for i in range(n)])
        for i, (weights, obj) in enumerate(trace.iterations):
            w.writerow([i, repr(obj)] + [repr(v) for v in weights])
