"""Per-sample score records, score tables and their CSV / manifest persistence.

A score file holds the output of one detector or beauty classifier::

    sample_id,filter,label,score
    s1,bonafide,bonafide,0.2
    s2,airbrush,attack,0.9

The source name is not stored in the file; it is supplied by the caller (CLI
flag or manifest key).
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from fusebench.errors import (
    ConsistencyError,
    DomainError,
    ParseError,
    UnknownFilterError,
    ValidationError,
)

BONAFIDE = "bonafide"
CSV_HEADER = ("sample_id", "filter", "label", "score")


class Label(enum.Enum):
    BONAFIDE = "bonafide"
    ATTACK = "attack"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown label {text!r}; expected 'bonafide' or 'attack'") from None


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    source: str
    filter: str
    label: Label
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValidationError(f"non-finite score {self.score!r} for sample {self.sample_id!r}")
        if (self.filter == BONAFIDE) != (self.label is Label.BONAFIDE):
            raise ValidationError(
                f"sample {self.sample_id!r}: filter {self.filter!r} contradicts label {self.label.value!r}"
            )


@dataclass(frozen=True)
class SourceRange:
    """Declared score range of one source, e.g. 1..10 for a beauty classifier."""

    source: str
    min: float
    max: float

    def __post_init__(self) -> None:
        if not (self.min < self.max):
            raise DomainError(f"source {self.source!r}: range min {self.min} must be < max {self.max}")


@dataclass(frozen=True)
class ScoreTable:
    """Immutable collection of score records spanning one or more sources."""

    records: tuple[ScoreRecord, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        index: dict[tuple[str, str], ScoreRecord] = {}
        labels: dict[str, Label] = {}
        for rec in records:
            key = (rec.sample_id, rec.source)
            if key in index:
                raise ValidationError(f"duplicate (sample_id, source) pair {key}")
            index[key] = rec
            seen = labels.setdefault(rec.sample_id, rec.label)
            if seen is not rec.label:
                raise ConsistencyError(f"sample {rec.sample_id!r} carries conflicting labels across sources")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def sources(self) -> tuple[str, ...]:
        """Distinct source names in first-appearance order."""
        return tuple(dict.fromkeys(r.source for r in self.records))

    @cached_property
    def filters(self) -> frozenset[str]:
        return frozenset(r.filter for r in self.records)

    @cached_property
    def attack_filters(self) -> tuple[str, ...]:
        return tuple(sorted(f for f in self.filters if f != BONAFIDE))

    @cached_property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.sample_id for r in self.records))

    def get(self, sample_id: str, source: str) -> ScoreRecord | None:
        return self._index.get((sample_id, source))

    def for_source(self, source: str) -> tuple[ScoreRecord, ...]:
        if source not in self.sources:
            raise KeyError(f"source {source!r} not in table (have {list(self.sources)})")
        return tuple(r for r in self.records if r.source == source)

    def scores(self, source: str, filter: str | None = None) -> np.ndarray:
        """Scores of one source, optionally restricted to one filter, in record order."""
        recs = self.for_source(source)
        if filter is not None:
            recs = tuple(r for r in recs if r.filter == filter)
        return np.array([r.score for r in recs], dtype=float)

    def where(self, predicate) -> "ScoreTable":
        return ScoreTable(tuple(r for r in self.records if predicate(r)))

    def select_samples(self, sample_ids: Iterable[str]) -> "ScoreTable":
        keep = set(sample_ids)
        return self.where(lambda r: r.sample_id in keep)

    def with_records(self, extra: Iterable[ScoreRecord]) -> "ScoreTable":
        return ScoreTable(self.records + tuple(extra))

    def matrix(self, sources: Sequence[str]) -> tuple[list[str], np.ndarray, list[str], list[Label]]:
        """Sample-by-source score matrix for samples present in every requested source.

        Returns ``(sample_ids, X, filters, labels)`` with rows in first-appearance order.
        """
        missing = [s for s in sources if s not in self.sources]
        if missing:
            raise ConsistencyError(f"sources missing from table: {missing}")
        ids, rows, filters, labels = [], [], [], []
        for sid in self.sample_ids:
            recs = [self._index.get((sid, s)) for s in sources]
            if any(r is None for r in recs):
                continue
            ids.append(sid)
            rows.append([r.score for r in recs])
            filters.append(recs[0].filter)
            labels.append(recs[0].label)
        X = np.array(rows, dtype=float).reshape(len(rows), len(sources))
        return ids, X, filters, labels

    def record_set(self) -> frozenset[ScoreRecord]:
        return frozenset(self.records)


def _parse_row(row: list[str], line: int, path: str, source: str) -> ScoreRecord:
    if len(row) != 4:
        raise ParseError(f"expected 4 fields, got {len(row)}", line=line, path=path)
    sample_id, filt, label_text, score_text = (c.strip() for c in row)
    if not sample_id:
        raise ParseError("empty sample_id", line=line, path=path)
    try:
        score = float(score_text)
    except ValueError:
        raise ParseError(f"score {score_text!r} is not a decimal number", line=line, path=path) from None
    try:
        label = Label.parse(label_text)
        return ScoreRecord(sample_id, source, filt, label, score)
    except ValidationError as exc:
        raise ValidationError(f"{path}:{line}: {exc}") from None


def load_scores(path: str | os.PathLike, source: str) -> ScoreTable:
    """Read a score CSV for one source and return a validated table."""
    path = os.fspath(path)
    records: list[ScoreRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header", line=1, path=path)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)}, got {','.join(header)}", line=1, path=path)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            rec = _parse_row(row, line, path, source)
            if rec.sample_id in seen:
                raise ValidationError(
                    f"{path}:{line}: duplicate sample_id {rec.sample_id!r} (first seen on line {seen[rec.sample_id]})"
                )
            seen[rec.sample_id] = line
            records.append(rec)
    return ScoreTable(tuple(records))


def save_scores(table: ScoreTable, path: str | os.PathLike, source: str | None = None) -> None:
    """Write one source of ``table`` in the score CSV format."""
    if source is None:
        if len(table.sources) > 1:
            raise ValueError(f"table holds several sources {table.sources}; pick one")
        recs = table.records
    else:
        recs = table.for_source(source)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in recs:
            w.writerow([r.sample_id, r.filter, r.label.value, repr(float(r.score))])


def join_tables(tables: Sequence[ScoreTable]) -> ScoreTable:
    """Inner join on sample_id: keep only samples present in every table."""
    if not tables:
        return ScoreTable()
    owner: dict[str, int] = {}
    for i, t in enumerate(tables):
        for s in t.sources:
            if s in owner:
                raise DomainError(f"source {s!r} appears in more than one input table")
            owner[s] = i
    common = set(tables[0].sample_ids)
    for t in tables[1:]:
        common &= set(t.sample_ids)
    # ScoreTable's constructor raises ConsistencyError on label conflicts.
    return ScoreTable(tuple(r for t in tables for r in t.records if r.sample_id in common))


def partition_by_filter(table: ScoreTable, filter: str) -> tuple[ScoreTable, ScoreTable]:
    """Split into (records of ``filter``, all bona fide records)."""
    if filter == BONAFIDE:
        raise UnknownFilterError("'bonafide' is not an attack filter")
    if filter not in table.filters:
        raise UnknownFilterError(f"filter {filter!r} not in table (have {sorted(table.filters)})")
    attack = table.where(lambda r: r.filter == filter)
    bonafide = table.where(lambda r: r.label is Label.BONAFIDE)
    return attack, bonafide


@dataclass(frozen=True)
class ManifestEntry:
    source: str
    path: Path
    declared: SourceRange | None


def load_manifest(path: str | os.PathLike) -> dict[str, ManifestEntry]:
    """Read a JSON manifest mapping source name to ``{path, min, max}``.

    Relative paths resolve against the manifest's directory. The mapping may
    also sit under a top-level ``score_sources`` key, next to run settings.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=str(path)) from None
    if isinstance(doc, dict) and "score_sources" in doc:
        doc = doc["score_sources"]
    if not isinstance(doc, dict) or not doc:
        raise ParseError("manifest must be a non-empty object of source entries", path=str(path))
    out: dict[str, ManifestEntry] = {}
    for name, entry in doc.items():
        if isinstance(entry, str):
            entry = {"path": entry}
        if not isinstance(entry, dict) or "path" not in entry:
            raise ParseError(f"source {name!r}: entry needs a 'path'", path=str(path))
        p = Path(entry["path"])
        if not p.is_absolute():
            p = path.parent / p
        lo, hi = entry.get("min"), entry.get("max")
        if (lo is None) != (hi is None):
            raise ParseError(f"source {name!r}: give both 'min' and 'max' or neither", path=str(path))
        declared = SourceRange(name, float(lo), float(hi)) if lo is not None else None
        out[name] = ManifestEntry(name, p, declared)
    return out


def save_manifest(entries: Mapping[str, ManifestEntry], path: str | os.PathLike) -> None:
    path = Path(path)
    doc = {}
    for name, e in entries.items():
        try:
            rel = os.path.relpath(e.path, path.parent)
        except ValueError:
            rel = str(e.path)
        item: dict = {"path": rel}
        if e.declared is not None:
            item["min"] = e.declared.min
            item["max"] = e.declared.max
        doc[name] = item
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest_table(
    manifest: Mapping[str, ManifestEntry], sources: Sequence[str] | None = None
) -> ScoreTable:
    """Load and inner-join the requested manifest sources (all when ``sources`` is None)."""
    names = list(manifest) if sources is None else list(sources)
    missing = [s for s in names if s not in manifest]
    if missing:
        raise ConsistencyError(f"source(s) not in manifest: {', '.join(missing)}")
    return join_tables([load_scores(manifest[s].path, s) for s in names])
