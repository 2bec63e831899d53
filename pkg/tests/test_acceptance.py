"""Acceptance checks. Each test registers one named criterion; the terminal
summary prints a PASS/FAIL line per criterion.

The oracles here are deliberately naive (Python loops, direct cosine sums,
exhaustive grids) so they share no code path with the implementation.
"""

from __future__ import annotations

import filecmp
import json
import math
import time

import numpy as np
import pytest

from conftest import make_table, two_source_problem
from oracles import brute_force_deer, naive_convolve_reflect
from fusebench import beauty, cli
from fusebench.fusion import FusionConfig, normalize, normalize_array
from fusebench.imgfeat.dct import dct2, idct2
from fusebench.imgfeat.srm import SRM_KERNELS, srm_residuals
from fusebench.learners import repeated_split_eval
from fusebench.metrics import classification_errors, deer, det_curve
from fusebench.optimizer import FusionObjective, PowellSettings, fit_fusion, powell_minimize


def random_score_set(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = int(rng.integers(5, 501))
    n_attack = int(rng.integers(1, n))
    kind = rng.integers(3)
    if kind == 0:
        scores = rng.normal(size=n)
    elif kind == 1:  # heavy ties
        scores = rng.integers(0, 6, size=n).astype(float)
    else:
        scores = rng.uniform(size=n) ** 3
    labels = rng.permutation(n) < n_attack
    return scores[labels], scores[~labels]


# -- criteria ----------------------------------------------------------------

def test_metrics_match_brute_force(criterion):
    criterion("D-EER equals a brute-force threshold sweep (100 sets, bit-equal, < 10 s)")
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        attack, bona = random_score_set(rng)
        mismatches += deer(attack, bona)[0] != brute_force_deer(attack.tolist(), bona.tolist())
    elapsed = time.perf_counter() - start
    criterion.note(f"mismatches={mismatches}, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 10.0


def test_metric_invariants(criterion):
    criterion("APCER/BPCER monotone, D-EER bound, affine invariance (1000 cases, zero violations)")
    rng = np.random.default_rng(7)
    monotone = bound = affine = 0
    worst_excess = 0.0
    for _ in range(1000):
        n_a, n_b = int(rng.integers(1, 80)), int(rng.integers(1, 80))
        # scores on a 1/64 grid keep a*x + b tie-free and order-preserving in floating point
        attack = rng.integers(0, 400, n_a) / 64.0
        bona = rng.integers(0, 400, n_b) / 64.0
        curve = det_curve(attack, bona)
        monotone += bool(np.any(np.diff(curve.apcer) < 0) or np.any(np.diff(curve.bpcer) > 0))
        ts = np.sort(rng.uniform(-1, 8, 5))
        ops = [classification_errors(attack, bona, t) for t in ts]
        monotone += any(p.apcer > q.apcer or p.bpcer < q.bpcer for p, q in zip(ops, ops[1:]))
        d, _ = deer(attack, bona)
        limit = 0.5 + 1.0 / min(n_a, n_b)
        if not 0.0 <= d <= limit:
            bound += 1
            worst_excess = max(worst_excess, d - limit)
        scale, shift = float(rng.uniform(0.01, 100)), float(rng.uniform(-100, 100))
        affine += deer(scale * attack + shift, scale * bona + shift)[0] != d
    # The upper bound does not hold for detectors at or below chance: with attack
    # scores all below the bona fide ones, APCER = BPCER = 1 at every separating
    # threshold, so D-EER = 1. It is reported here unweakened.
    criterion.note(f"monotonicity violations={monotone}, bound violations={bound} "
                   f"(worst excess {worst_excess:.3f}), affine violations={affine}")
    assert monotone == 0
    assert affine == 0
    assert bound == 0


def test_normalization_exact(criterion):
    criterion("min-max normalization: endpoints, midpoint and order exact on dyadic inputs")
    rng = np.random.default_rng(3)
    failures = 0
    for _ in range(2000):
        lo = int(rng.integers(-512, 512)) / 8.0
        hi = lo + int(rng.integers(1, 512)) / 8.0
        a = int(rng.integers(-64, 64)) / 4.0
        b = a + int(rng.integers(1, 64)) / 4.0
        failures += normalize(lo, lo, hi, a, b) != a
        failures += normalize(hi, lo, hi, a, b) != b
        failures += normalize((lo + hi) / 2, lo, hi, a, b) != (a + b) / 2
        xs = np.sort(rng.uniform(lo, hi, 50))
        ys = normalize_array(xs, lo, hi, a, b)
        failures += bool(np.any(np.diff(ys) < 0))
    # a non-dyadic case stays within 1e-12
    failures += abs(normalize(0.35, 0.1, 0.6, 0.0, 1.0) - 0.5) > 1e-12
    criterion.note(f"failures={failures}")
    assert failures == 0


def test_powell_analytic(criterion):
    criterion("Powell: quadratic, Rosenbrock and N+1-iteration convergence on SPD quadratics (< 5 s)")
    start = time.perf_counter()
    quad = powell_minimize(lambda w: (w[0] - 1) ** 2 + (w[1] + 2) ** 2, [0.5, 0.5])
    rosen = powell_minimize(lambda w: 100 * (w[1] - w[0] ** 2) ** 2 + (1 - w[0]) ** 2, [-1.2, 1.0],
                            PowellSettings(max_iterations=1000, objective_tolerance=1e-14))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 6))
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        hess = q @ np.diag(rng.uniform(0.5, 5.0, n)) @ q.T
        centre = rng.normal(scale=2.0, size=n)
        # a tight objective tolerance so the run is not stopped before N+1 iterations
        trace = powell_minimize(lambda w: float((w - centre) @ hess @ (w - centre)), np.zeros(n),
                                PowellSettings(max_iterations=n + 1, objective_tolerance=1e-14))
        worst = max(worst, float(np.max(np.abs(np.array(trace.final_weights) - centre))))
    elapsed = time.perf_counter() - start
    q_err = float(np.max(np.abs(np.array(quad.final_weights) - [1, -2])))
    r_err = float(np.max(np.abs(np.array(rosen.final_weights) - [1, 1])))
    criterion.note(f"quadratic err={q_err:.1e}, Rosenbrock err={r_err:.1e}, SPD worst={worst:.1e}, {elapsed:.2f}s")
    assert q_err <= 1e-4
    assert r_err <= 1e-3
    assert worst <= 1e-4
    assert elapsed < 5.0


def test_fusion_matches_weight_grid(criterion):
    criterion("fused weights vs 101x101 weight grid on [-2,2]^2 (within 0.005, <= equal weights, < 60 s)")
    start = time.perf_counter()
    table = two_source_problem(seed=0)
    config, trace = fit_fusion(table, ("good", "noise"))
    objective = FusionObjective(table, FusionConfig(("good", "noise"), (0.5, 0.5)))
    equal = objective((0.5, 0.5))
    axis = np.linspace(-2.0, 2.0, 101)
    grid_min = min(objective((w1, w2)) for w1 in axis for w2 in axis)
    elapsed = time.perf_counter() - start
    criterion.note(f"fitted={trace.final_objective:.5f}, grid={grid_min:.5f}, equal={equal:.5f}, {elapsed:.1f}s")
    assert trace.final_objective <= grid_min + 0.005
    assert trace.final_objective <= equal
    assert elapsed < 60.0


def test_dct_properties(criterion):
    criterion("DCT: round trip < 1e-9, Parseval 1e-6 relative, single cosine -> single coefficient")
    rng = np.random.default_rng(5)
    plane = rng.normal(size=(64, 64)) * 50
    spec = dct2(plane)
    round_trip = float(np.max(np.abs(idct2(spec) - plane)))
    parseval = abs(float((spec ** 2).sum()) - float((plane ** 2).sum())) / float((plane ** 2).sum())
    n, k, l = 64, 5, 11
    idx = np.arange(n)
    cosine = np.outer(np.cos(np.pi * (2 * idx + 1) * k / (2 * n)), np.cos(np.pi * (2 * idx + 1) * l / (2 * n)))
    c = dct2(cosine)
    others = np.abs(c.copy())
    others[k, l] = 0.0
    criterion.note(f"round trip={round_trip:.1e}, parseval={parseval:.1e}, max other={others.max():.1e}")
    assert round_trip < 1e-9
    assert parseval < 1e-6
    assert abs(c[k, l]) > 1.0
    assert others.max() < 1e-9


def test_srm_properties(criterion):
    criterion("SRM: constant -> exact zeros, naive convolution within 1e-9, clamp respected")
    const = srm_residuals(np.full((32, 32), 117.3)).as_array()
    rng = np.random.default_rng(9)
    plane = rng.uniform(0, 255, (32, 32))
    wide = srm_residuals(plane, clamp_threshold=1e6).planes
    worst = max(float(np.max(np.abs(p - naive_convolve_reflect(plane, k)))) for p, k in zip(wide, SRM_KERNELS))
    clamped = srm_residuals(plane, clamp_threshold=2.0).as_array()
    criterion.note(f"max |const|={np.abs(const).max()}, oracle err={worst:.1e}, max |clamped|={np.abs(clamped).max()}")
    assert np.all(const == 0.0)
    assert worst < 1e-9
    assert np.abs(clamped).max() <= 2.0


def test_kde_standard_normal(criterion):
    criterion("KDE of N(0,1), n=10000: density(0) within 0.03 of 0.39894, integral within 0.01 of 1")
    x = np.random.default_rng(1).normal(size=10_000)
    curve = beauty.kde(x)
    at_zero = float(np.interp(0.0, curve.grid, curve.density))
    integral = float(np.trapezoid(curve.density, curve.grid))
    criterion.note(f"density(0)={at_zero:.4f}, integral={integral:.5f}")
    assert abs(at_zero - 1 / math.sqrt(2 * math.pi)) <= 0.03
    assert abs(integral - 1.0) <= 0.01


def test_beauty_distance_spot_value(criterion):
    criterion("beauty distance: means 3.2581 and 2.5593 -> 0.6988")
    d = beauty.beauty_distance([3.2581], [2.5593])
    criterion.note(f"distance={d!r}")
    assert round(d, 4) == 0.6988
    assert abs(d - 0.6988) < 1e-12


@pytest.mark.slow
def test_demo_end_to_end(criterion, tmp_path):
    criterion("demo --seed 42 --n-subjects 50: < 5 min, byte-identical reruns, fused <= best + 0.01, SRM/DCT < 0.4")
    start = time.perf_counter()
    assert cli.main(["demo", "--seed", "42", "--n-subjects", "50", "--out", str(tmp_path / "a")]) == 0
    elapsed = time.perf_counter() - start
    assert cli.main(["demo", "--seed", "42", "--n-subjects", "50", "--out", str(tmp_path / "b")]) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")

    def differing(c) -> list[str]:
        out = c.diff_files + c.left_only + c.right_only + c.funny_files
        for sub in c.subdirs.values():
            out += differing(sub)
        return out

    # dircmp compares shallowly by stat; force a byte comparison of every common file
    files = [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()]
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", [str(f) for f in files], shallow=False)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    avg = summary["average_deer"]
    best_single = min(avg["rgb"], avg["dct"], avg["srm"])
    criterion.note(f"{elapsed:.1f}s per run, fused={avg['fused']:.4f}, best single={best_single:.4f}, "
                   f"srm={avg['srm']:.4f}, dct={avg['dct']:.4f}, differing files={len(mismatch) + len(errors)}")
    assert elapsed < 300.0
    assert not differing(cmp) and not mismatch and not errors
    assert avg["fused"] <= best_single + 0.01
    assert avg["srm"] < 0.4
    assert avg["dct"] < 0.4


def _learner_table(seed: int, n: int, perfect: bool) -> object:
    rng = np.random.default_rng(seed)
    filters = ("f1", "f2", "f3")
    n_bona, n_attack = n // 2, n // 2 // len(filters)
    sources = {}
    for s in range(5):
        if perfect:
            bona = rng.uniform(0.0, 0.4, n_bona)
            attacks = {f: rng.uniform(0.6, 1.0, n_attack) for f in filters}
        else:
            bona = rng.uniform(size=n_bona)
            attacks = {f: rng.uniform(size=n_attack) for f in filters}
        sources[f"s{s}"] = (bona, attacks)
    return make_table(sources)


@pytest.mark.slow
def test_ml_fusion_protocol(criterion):
    criterion("repeated splits: 10 runs at 70/30, recomputable mean/std, perfect < 0.01, noise within 0.1 of 0.5")
    perfect = _learner_table(0, 600, perfect=True)
    noise = _learner_table(1, 2000, perfect=False)
    notes = []
    for learner in ("forest", "svc"):
        rep = repeated_split_eval(perfect, learner, train_fraction=0.7, repeats=10, seed=0)
        assert len(rep.per_run_deer) == 10 and rep.train_fraction == 0.7
        assert rep.mean == pytest.approx(float(np.mean(rep.per_run_deer)), abs=1e-15)
        assert rep.std_dev == pytest.approx(float(np.std(rep.per_run_deer)), abs=1e-15)
        assert rep.mean < 0.01
        notes.append(f"{learner} perfect={rep.mean:.4f}")
        rep = repeated_split_eval(noise, learner, train_fraction=0.7, repeats=10, seed=0)
        assert len(rep.per_run_deer) == 10
        assert abs(rep.mean - 0.5) <= 0.1
        notes.append(f"{learner} noise={rep.mean:.4f}")
    criterion.note(", ".join(notes))
