from __future__ import annotations

import numpy as np
import pytest

from conftest import make_table
from fusebench.errors import DegenerateError, DomainError
from fusebench.learners import (
    FeatureVector,
    _best_split,
    _stratified_split,
    average_deer_arrays,
    grow_tree,
    hinge_objective,
    repeated_split_eval,
    score_forest,
    stack_features,
    train_forest,
    train_logistic,
    train_margin,
)
from fusebench.metrics import deer
from fusebench.rng import substream
from fusebench.scores import Label


def gini_split_oracle(X, y, min_leaf):
    """Try every feature and every midpoint with plain loops; return the lowest weighted Gini."""
    best = None
    n, d = X.shape
    for f in range(d):
        values = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            thr = 0.5 * (lo + hi)
            left, right = y[X[:, f] <= thr], y[X[:, f] > thr]
            if left.size < min_leaf or right.size < min_leaf:
                continue
            cost = sum(part.size * (1 - part.mean() ** 2 - (1 - part.mean()) ** 2) for part in (left, right))
            if best is None or cost < best[0] - 1e-12:
                best = (cost, f, thr)
    return best


def _weighted_gini(X, y, f, thr):
    parts = (y[X[:, f] <= thr], y[X[:, f] > thr])
    return sum(p.size * (1 - p.mean() ** 2 - (1 - p.mean()) ** 2) for p in parts)


@pytest.mark.parametrize("seed", range(40))
def test_best_split_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 30))
    X = rng.integers(0, 6, size=(n, 3)).astype(float)
    y = rng.integers(0, 2, size=n).astype(np.int8)
    got = _best_split(X, y, 2)
    want = gini_split_oracle(X, y, 2)
    if want is None:
        assert got is None
        return
    f, thr = got
    assert _weighted_gini(X, y, f, thr) == pytest.approx(want[0], abs=1e-9)


def _xor(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(np.int8)
    return X, y


def test_tree_fits_training_xor():
    X, y = _xor(200, 0)
    tree = grow_tree(X, y, min_leaf=1)
    assert np.array_equal(tree.predict(X), y.astype(float))


def test_forest_learns_xor_and_is_seeded():
    X, y = _xor(300, 1)
    model = train_forest(X, y, n_trees=30, seed=5)
    assert model.n_trees == 30
    assert model.oob_accuracy > 0.9
    Xt, yt = _xor(300, 2)
    assert np.mean((model.predict_proba(Xt) >= 0.5) == yt) > 0.9
    again = train_forest(X, y, n_trees=30, seed=5)
    assert np.array_equal(again.predict_proba(Xt), model.predict_proba(Xt))
    assert 0.0 <= score_forest(model, FeatureVector((0.5, -0.5), Label.ATTACK)) <= 1.0
    with pytest.raises(DomainError):
        score_forest(model, (1.0, 2.0, 3.0))


def test_single_class_is_degenerate():
    X = np.zeros((5, 2))
    for train in (train_forest, train_margin, train_logistic):
        with pytest.raises(DegenerateError):
            train(X, np.ones(5))


def test_stack_features():
    data = [FeatureVector((1.0, 2.0), Label.ATTACK), FeatureVector((0.0, 1.0), Label.BONAFIDE)]
    X, y = stack_features(data)
    assert X.shape == (2, 2) and y.tolist() == [1, 0]
    with pytest.raises(DomainError):
        stack_features([data[0], FeatureVector((1.0,), Label.ATTACK)])


def _blobs(seed, n=200):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2, 1, (n, 2)), rng.normal(2, 1, (n, 2))]) * [1.0, 30.0] + [5.0, -40.0]
    y = np.r_[np.zeros(n), np.ones(n)].astype(np.int8)
    return X, y


def test_margin_model_separates_scaled_blobs():
    X, y = _blobs(3)
    model = train_margin(X, y, regularization=1e-3, epochs=15, seed=1)
    assert np.mean(model.predict(X) == y) > 0.97
    history = model.objective_history
    assert len(history) == 15
    assert history[-1] <= history[0]
    with pytest.raises(DomainError):
        train_margin(X, y, regularization=0.0)


def test_hinge_objective_value():
    Z = np.array([[1.0, 1.0], [-1.0, 1.0]])
    s = np.array([1.0, -1.0])
    w = np.array([0.5, 0.0])
    # margins are 0.5 each, hinge 0.5 each, plus 0.5 * lam * 0.25
    assert hinge_objective(w, Z, s, 0.1) == pytest.approx(0.0125 + 0.5)


def test_logistic_model():
    X, y = _blobs(4)
    model = train_logistic(X, y)
    p = model.predict_proba(X)
    assert np.all((p >= 0) & (p <= 1))
    assert np.mean((p >= 0.5) == y) > 0.97


def test_stratified_split_sizes():
    groups = np.array(["a"] * 100 + ["b"] * 33 + ["c"] * 7, dtype=object)
    rng = substream(0, "test")
    for _ in range(20):
        train = _stratified_split(groups, 0.7, rng)
        assert train[:100].sum() == 70
        assert train[100:133].sum() in (23, 24)
        assert train[133:].sum() in (4, 5)


def test_average_deer_arrays():
    scores = np.array([0.1, 0.2, 0.3, 0.6, 0.7, 0.25, 0.9])
    filters = np.array(["bonafide"] * 3 + ["a"] * 2 + ["b"] * 2, dtype=object)
    bona = scores[:3]
    expected = (deer(scores[3:5], bona)[0] + deer(scores[5:], bona)[0]) / 2
    assert average_deer_arrays(scores, filters) == pytest.approx(expected)


def _score_table(seed, n_bona=120, n_attack=40):
    rng = np.random.default_rng(seed)
    return make_table({
        "good": (rng.normal(0.3, 0.1, n_bona), {f: rng.normal(0.7, 0.1, n_attack) for f in ("f1", "f2")}),
        "noise": (rng.uniform(size=n_bona), {f: rng.uniform(size=n_attack) for f in ("f1", "f2")}),
    })


@pytest.mark.parametrize("learner", ["forest", "svc"])
def test_repeated_split_eval(learner):
    table = _score_table(7)
    report = repeated_split_eval(table, learner, repeats=4, seed=3, n_trees=15, epochs=5)
    assert len(report.per_run_deer) == 4
    assert report.mean == pytest.approx(np.mean(report.per_run_deer))
    assert report.std_dev == pytest.approx(np.std(report.per_run_deer))
    assert report.mean < 0.1
    again = repeated_split_eval(table, learner, repeats=4, seed=3, n_trees=15, epochs=5)
    assert again.per_run_deer == report.per_run_deer


def test_repeated_split_eval_rejects_bad_arguments():
    table = _score_table(8, 20, 5)
    with pytest.raises(DomainError):
        repeated_split_eval(table, "knn")
    for frac in (0.0, 1.0):
        with pytest.raises(DomainError):
            repeated_split_eval(table, train_fraction=frac)
    with pytest.raises(DomainError):
        repeated_split_eval(table, repeats=0)


def test_repeated_split_eval_reports_impossible_split():
    # a single sample per filter cannot land in both the training and the test part
    table = make_table({"s": ([0.1], {"f": [0.9]})})
    with pytest.raises(DegenerateError, match="no valid split"):
        repeated_split_eval(table, repeats=1, n_trees=2)
