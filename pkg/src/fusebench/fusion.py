"""Min-max normalisation, weighted-sum score fusion and fusion-config files.

Fusion of ``N`` sources for one sample::

    s_new = sum_i w_i * norm_i(s_i)

where ``norm_i`` maps source ``i`` from its declared range onto the target
range ``[a, b]``. Weights may be negative. The fused population is then min-max
renormalised to ``[0, 1]`` so that thresholds are comparable across weight
vectors.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from fusebench.errors import ConsistencyError, DegenerateError, DomainError, ParseError
from fusebench.scores import ScoreRecord, ScoreTable, SourceRange

FUSED_SOURCE = "fused"
CONFIG_FORMAT_VERSION = 1


def normalize(x: float, range_min: float, range_max: float, a: float = 0.0, b: float = 1.0,
              clamp: bool = True) -> float:
    """Map ``x`` from ``[range_min, range_max]`` onto ``[a, b]``; out-of-range inputs clamp to ``[a, b]``."""
    if not range_min < range_max:
        raise DomainError(f"range_min {range_min} must be < range_max {range_max}")
    if not a < b:
        raise DomainError(f"target lower bound {a} must be < upper bound {b}")
    t = (x - range_min) / (range_max - range_min)
    # pin the top end: a + 1 * (b - a) can round below b
    y = b if t == 1.0 else a + t * (b - a)
    if clamp:
        y = min(max(y, a), b)
    return y


def normalize_array(x, range_min: float, range_max: float, a: float = 0.0, b: float = 1.0,
                    clamp: bool = True) -> np.ndarray:
    if not range_min < range_max:
        raise DomainError(f"range_min {range_min} must be < range_max {range_max}")
    if not a < b:
        raise DomainError(f"target lower bound {a} must be < upper bound {b}")
    t = (np.asarray(x, dtype=float) - range_min) / (range_max - range_min)
    y = np.where(t == 1.0, b, a + t * (b - a))
    return np.clip(y, a, b) if clamp else y


def _empirical_map(values: np.ndarray, a: float, b: float, allow_constant: bool) -> tuple[np.ndarray, float, float]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        if not allow_constant:
            raise DegenerateError(
                f"all scores equal {lo}; empirical min-max range is empty "
                "(use declared mode or opt in to the constant mapping)"
            )
        return np.full(values.shape, (a + b) / 2.0), lo, hi
    return normalize_array(values, lo, hi, a, b), lo, hi


def normalize_source(table: ScoreTable, source: str, mode: str = "declared", a: float = 0.0,
                     b: float = 1.0, source_range: SourceRange | None = None,
                     allow_constant: bool = False) -> ScoreTable:
    """Return a copy of ``table`` with every score of ``source`` min-max normalised.

    ``mode="declared"`` uses ``source_range``; ``mode="empirical"`` uses the
    observed min/max of the source in this table.
    """
    recs = table.for_source(source)
    values = np.array([r.score for r in recs])
    if mode == "declared":
        if source_range is None:
            raise DomainError(f"declared mode needs a SourceRange for {source!r}")
        mapped = normalize_array(values, source_range.min, source_range.max, a, b)
    elif mode == "empirical":
        if values.size == 0:
            raise DomainError(f"source {source!r} has no scores")
        mapped, _, _ = _empirical_map(values, a, b, allow_constant)
    else:
        raise DomainError(f"unknown normalisation mode {mode!r}")
    new = {r.sample_id: float(v) for r, v in zip(recs, mapped)}
    return ScoreTable(tuple(
        replace(r, score=new[r.sample_id]) if r.source == source else r for r in table.records
    ))


@dataclass(frozen=True)
class FusionConfig:
    sources: tuple[str, ...]
    weights: tuple[float, ...]
    source_ranges: tuple[SourceRange, ...] = ()
    target_range: tuple[float, float] = (0.0, 1.0)
    calibrated_threshold: float | None = None
    fused_renorm_min: float | None = None
    fused_renorm_max: float | None = None
    _ranges: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "source_ranges", tuple(self.source_ranges))
        object.__setattr__(self, "target_range", tuple(float(v) for v in self.target_range))
        if len(self.sources) == 0:
            raise DomainError("fusion needs at least one source")
        if len(set(self.sources)) != len(self.sources):
            raise DomainError(f"duplicate source names in {self.sources}")
        if len(self.weights) != len(self.sources):
            raise DomainError(f"{len(self.sources)} sources but {len(self.weights)} weights")
        if not all(math.isfinite(w) for w in self.weights):
            raise DomainError("weights must be finite")
        a, b = self.target_range
        if not a < b:
            raise DomainError(f"target range ({a}, {b}) must have a < b")
        ranges = {r.source: r for r in self.source_ranges}
        unknown = set(ranges) - set(self.sources)
        if unknown:
            raise DomainError(f"ranges given for sources not fused: {sorted(unknown)}")
        if (self.fused_renorm_min is None) != (self.fused_renorm_max is None):
            raise DomainError("fused_renorm_min and fused_renorm_max go together")
        object.__setattr__(self, "_ranges", ranges)

    def range_for(self, source: str) -> SourceRange:
        """Declared range of ``source``; sources without one are taken as probabilities in [0, 1]."""
        return self._ranges.get(source) or SourceRange(source, 0.0, 1.0)

    def with_weights(self, weights: Sequence[float]) -> "FusionConfig":
        return replace(self, weights=tuple(weights))


def normalized_matrix(table: ScoreTable, config: FusionConfig):
    """Per-source normalised score matrix for the samples carrying every config source.

    Raises ``ConsistencyError`` if any sample lacks one of the sources.
    """
    missing = [s for s in config.sources if s not in table.sources]
    if missing:
        raise ConsistencyError(f"table lacks fusion source(s): {', '.join(missing)}")
    ids, X, filters, labels = table.matrix(config.sources)
    if len(ids) != len(table.sample_ids):
        lacking = [s for s in table.sample_ids if s not in set(ids)]
        raise ConsistencyError(f"{len(lacking)} sample(s) lack a fusion source, e.g. {lacking[0]!r}")
    a, b = config.target_range
    cols = [normalize_array(X[:, j], config.range_for(s).min, config.range_for(s).max, a, b)
            for j, s in enumerate(config.sources)]
    Xn = np.column_stack(cols) if cols else X
    return ids, Xn, filters, labels


def weighted_sum(normalized: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    return normalized @ np.asarray(weights, dtype=float)


def fuse(table: ScoreTable, config: FusionConfig, renorm: str = "empirical",
         allow_constant: bool = False) -> ScoreTable:
    """Add a ``"fused"`` source holding the renormalised weighted sum per sample.

    ``renorm="empirical"`` rescales the fused population by its own min/max;
    ``renorm="stored"`` uses ``config.fused_renorm_min/max`` (clamped), which is
    how a calibrated config is applied to new data.
    """
    ids, Xn, filters, labels = normalized_matrix(table, config)
    raw = weighted_sum(Xn, config.weights)
    if raw.size == 0:
        return table
    if renorm == "empirical":
        fused, _, _ = _empirical_map(raw, 0.0, 1.0, allow_constant)
    elif renorm == "stored":
        if config.fused_renorm_min is None:
            raise DomainError("config has no stored renormalisation range")
        if config.fused_renorm_min == config.fused_renorm_max:
            fused = np.full(raw.shape, 0.5)
        else:
            fused = normalize_array(raw, config.fused_renorm_min, config.fused_renorm_max)
    else:
        raise DomainError(f"unknown renorm mode {renorm!r}")
    base = table.where(lambda r: r.source != FUSED_SOURCE)
    return base.with_records(
        ScoreRecord(sid, FUSED_SOURCE, f, lab, float(s))
        for sid, f, lab, s in zip(ids, filters, labels, fused)
    )


def raw_fused_range(table: ScoreTable, config: FusionConfig) -> tuple[float, float]:
    """Min and max of the un-renormalised weighted sum over ``table``."""
    _, Xn, _, _ = normalized_matrix(table, config)
    raw = weighted_sum(Xn, config.weights)
    return float(raw.min()), float(raw.max())


def config_to_dict(config: FusionConfig) -> dict:
    return {
        "format_version": CONFIG_FORMAT_VERSION,
        "sources": list(config.sources),
        "weights": list(config.weights),
        "source_ranges": [{"source": r.source, "min": r.min, "max": r.max} for r in config.source_ranges],
        "target_range": list(config.target_range),
        "fused_renorm_min": config.fused_renorm_min,
        "fused_renorm_max": config.fused_renorm_max,
        "calibrated_threshold": config.calibrated_threshold,
    }


def config_from_dict(doc: dict, path: str | None = None) -> FusionConfig:
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if version != CONFIG_FORMAT_VERSION:
        raise ParseError(
            f"unsupported fusion config format_version {version!r} (expected {CONFIG_FORMAT_VERSION})",
            path=path,
        )
    try:
        ranges = tuple(SourceRange(r["source"], float(r["min"]), float(r["max"]))
                       for r in doc.get("source_ranges", []))
        thr = doc.get("calibrated_threshold")
        lo, hi = doc.get("fused_renorm_min"), doc.get("fused_renorm_max")
        return FusionConfig(
            sources=tuple(doc["sources"]),
            weights=tuple(float(w) for w in doc["weights"]),
            source_ranges=ranges,
            target_range=tuple(doc.get("target_range", (0.0, 1.0))),
            calibrated_threshold=None if thr is None else float(thr),
            fused_renorm_min=None if lo is None else float(lo),
            fused_renorm_max=None if hi is None else float(hi),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"fusion config v{version}: {exc}", path=path) from None


def save_config(config: FusionConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")


def load_config(path: str | os.PathLike) -> FusionConfig:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from None
    return config_from_dict(doc, path)
