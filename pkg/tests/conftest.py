from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import pytest

from fusebench.scores import BONAFIDE, Label, ScoreRecord, ScoreTable

_CRITERIA: list[tuple[str, str, str]] = []


def make_table(sources: Mapping[str, tuple[Sequence[float], Mapping[str, Sequence[float]]]]) -> ScoreTable:
    """Table from ``{source: (bonafide_scores, {filter: attack_scores})}``.

    Sample ids are positional, so every source must have the same shape.
    """
    records = []
    for source, (bona, attacks) in sources.items():
        for i, s in enumerate(bona):
            records.append(ScoreRecord(f"b{i:05d}", source, BONAFIDE, Label.BONAFIDE, float(s)))
        for f, values in attacks.items():
            for i, s in enumerate(values):
                records.append(ScoreRecord(f"{f}-{i:05d}", source, f, Label.ATTACK, float(s)))
    return ScoreTable(tuple(records))


def two_source_problem(seed: int, n_bona: int = 300, n_attack: int = 100,
                       filters: Sequence[str] = ("f1", "f2", "f3")) -> ScoreTable:
    """Informative source (class means 0.3/0.7, sigma 0.1) plus a uniform-noise source."""
    rng = np.random.default_rng(seed)
    good_b = rng.normal(0.3, 0.1, n_bona)
    good_a = {f: rng.normal(0.7, 0.1, n_attack) for f in filters}
    noise_b = rng.uniform(0, 1, n_bona)
    noise_a = {f: rng.uniform(0, 1, n_attack) for f in filters}
    return make_table({"good": (good_b, good_a), "noise": (noise_b, noise_a)})


class _Criterion:
    def __init__(self) -> None:
        self.names: list[str] = []
        self.details: list[str] = []

    def __call__(self, name: str) -> "_Criterion":
        self.names.append(name)
        return self

    def note(self, text: str) -> None:
        self.details.append(text)


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion; its outcome is printed in the terminal summary."""
    c = _Criterion()
    yield c
    outcome = getattr(request.node, "_call_outcome", "failed")
    for name in c.names:
        _CRITERIA.append((name, outcome, "; ".join(c.details)))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    if report.when == "call":
        item._call_outcome = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _CRITERIA:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}" + (f"  ({detail})" if detail else ""))
