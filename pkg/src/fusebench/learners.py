"""From-scratch classifiers for score-level ML fusion and the demo detector.

* ``train_forest``: bagged Gini decision trees, all features tried at every split.
* ``train_margin``: linear hinge-loss classifier trained with Pegasos steps.
* ``train_logistic``: batch gradient-descent logistic regression.
* ``repeated_split_eval``: stratified random train/test splits scored by average D-EER.

Labels are encoded as 1 for attack and 0 for bona fide.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fusebench.errors import DegenerateError, DomainError
from fusebench.metrics import deer
from fusebench.rng import substream
from fusebench.scores import BONAFIDE, Label, ScoreTable

log = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    label: Label


def stack_features(data: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise DomainError("no feature vectors")
    dims = {len(v.values) for v in data}
    if len(dims) != 1:
        raise DomainError(f"feature vectors have mixed dimensions {sorted(dims)}")
    X = np.array([v.values for v in data], dtype=float)
    if not np.all(np.isfinite(X)):
        raise DomainError("feature vectors contain non-finite values")
    y = np.array([v.label is Label.ATTACK for v in data], dtype=np.int8)
    return X, y


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y).astype(np.int8).ravel()
    if X.shape[0] != y.size:
        raise DomainError(f"{X.shape[0]} rows but {y.size} labels")
    if X.shape[0] < 2:
        raise DomainError("need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise DomainError("features contain non-finite values")
    if np.unique(y).size < 2:
        raise DegenerateError("training data holds a single class")
    return X, y


# ---------------------------------------------------------------- trees


@dataclass(frozen=True)
class DecisionTree:
    """Array-encoded binary tree; ``value`` is the attack fraction of the node's samples."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] != LEAF
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return self.feature.size


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float] | None:
    """Lowest weighted-Gini axis split over all features; ties go to the lower feature index."""
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order].astype(float)
    pos_left = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    pos_right = ys.sum(axis=0) - pos_left
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    # n * weighted Gini, up to the constant factor 2
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = pos_left * (n_left - pos_left) / n_left + pos_right * (n_right - pos_right) / n_right
    cost = np.where(valid, cost, np.inf)
    # feature-major flattening makes argmin prefer lower feature, then lower position
    flat = int(np.argmin(cost.T))
    f, i = divmod(flat, n - 1)
    return f, 0.5 * (xs[i, f] + xs[i + 1, f])


def grow_tree(X: np.ndarray, y: np.ndarray, min_leaf: int = 2) -> DecisionTree:
    """Grow until nodes are pure or no split leaves ``min_leaf`` samples on both sides."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(y.size)), np.arange(y.size))]
    while stack:
        node, idx = stack.pop()
        frac = value[node]
        if frac == 0.0 or frac == 1.0 or idx.size < 2 * min_leaf:
            continue
        split = _best_split(X[idx], y[idx], min_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    n_features: int
    oob_accuracy: float | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.n_features > 1 else X[:, None]
        if X.shape[1] != self.n_features:
            raise DomainError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def train_forest(X, y, n_trees: int = 100, seed: int = 0, min_leaf: int = 2) -> ForestModel:
    """Bagged Gini trees; every tree sees a bootstrap sample and all features."""
    X, y = _check_xy(X, y)
    if n_trees < 1:
        raise DomainError("n_trees must be >= 1")
    n = y.size
    trees = []
    oob_votes = np.zeros(n)
    oob_counts = np.zeros(n)
    for t in range(n_trees):
        rng = substream(seed, "forest", t)
        sample = rng.integers(0, n, size=n)
        tree = grow_tree(X[sample], y[sample], min_leaf)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), sample, assume_unique=False)
        if oob.size:
            oob_votes[oob] += tree.predict(X[oob])
            oob_counts[oob] += 1
    seen = oob_counts > 0
    oob_acc = None
    if seen.any():
        pred = (oob_votes[seen] / oob_counts[seen]) >= 0.5
        oob_acc = float(np.mean(pred == (y[seen] == 1)))
    return ForestModel(tuple(trees), X.shape[1], oob_acc)


def score_forest(model: ForestModel, x) -> float:
    """Mean attack fraction over the trees' leaves for one feature vector."""
    values = x.values if isinstance(x, FeatureVector) else x
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != model.n_features:
        raise DomainError(f"expected {model.n_features} features, got {arr.size}")
    return float(model.predict_proba(arr[None, :])[0])


# ---------------------------------------------------------------- linear models


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


@dataclass(frozen=True)
class MarginModel:
    weights: np.ndarray
    bias: float
    objective_history: tuple[float, ...] = field(default=(), compare=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.weights.size > 1 else X[:, None]
        if X.shape[1] != self.weights.size:
            raise DomainError(f"expected {self.weights.size} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int8)


def hinge_objective(w: np.ndarray, Z: np.ndarray, s: np.ndarray, lam: float) -> float:
    """Regularised hinge loss on augmented inputs ``Z`` with labels ``s`` in {-1, +1}."""
    margins = s * (Z @ w)
    return float(0.5 * lam * w @ w + np.mean(np.maximum(0.0, 1.0 - margins)))


def train_margin(X, y, regularization: float = 1e-3, epochs: int = 20, seed: int = 0) -> MarginModel:
    """Linear max-margin classifier by Pegasos stochastic sub-gradient steps.

    Inputs are standardised and augmented with a constant 1 (so the bias is
    learned as a regularised weight); the returned weights and bias act on the
    raw inputs. ``objective_history`` holds the hinge objective of each epoch's
    averaged iterate.
    """
    X, y = _check_xy(X, y)
    if regularization <= 0:
        raise DomainError("regularization must be positive")
    if epochs < 1:
        raise DomainError("epochs must be >= 1")
    mean, scale = _standardizer(X)
    Z = np.hstack([(X - mean) / scale, np.ones((X.shape[0], 1))])
    s = np.where(y == 1, 1.0, -1.0)
    lam = float(regularization)
    radius = 1.0 / math.sqrt(lam)
    rng = substream(seed, "margin")
    w = np.zeros(Z.shape[1])
    t = 0
    history = []
    for _ in range(epochs):
        w_sum = np.zeros_like(w)
        for i in rng.permutation(y.size):
            t += 1
            eta = 1.0 / (lam * t)
            violated = s[i] * (Z[i] @ w) < 1.0
            w *= 1.0 - eta * lam
            if violated:
                w += eta * s[i] * Z[i]
            norm = math.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
            w_sum += w
        history.append(hinge_objective(w_sum / y.size, Z, s, lam))
    w_avg = w_sum / y.size
    weights = w_avg[:-1] / scale
    bias = float(w_avg[-1] - np.sum(w_avg[:-1] * mean / scale))
    return MarginModel(weights, bias, tuple(history))


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float

    def predict_proba(self, X) -> np.ndarray:
        z = np.asarray(X, dtype=float) @ self.weights + self.bias
        return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_logistic(X, y, learning_rate: float = 0.5, epochs: int = 500, l2: float = 1e-3) -> LogisticModel:
    """Full-batch gradient descent on the L2-regularised log loss (standardised inputs)."""
    X, y = _check_xy(X, y)
    mean, scale = _standardizer(X)
    Z = (X - mean) / scale
    w = np.zeros(Z.shape[1])
    b = 0.0
    for _ in range(epochs):
        p = 0.5 * (1.0 + np.tanh(0.5 * (Z @ w + b)))
        err = p - y
        w -= learning_rate * (Z.T @ err / y.size + l2 * w)
        b -= learning_rate * float(err.mean())
    weights = w / scale
    return LogisticModel(weights, float(b - np.sum(w * mean / scale)))


# ---------------------------------------------------------------- protocol


@dataclass(frozen=True)
class RepeatedSplitReport:
    per_run_deer: tuple[float, ...]
    mean: float
    std_dev: float
    learner: str = ""
    train_fraction: float = 0.0


MAX_REDRAWS = 100


def _stratified_split(groups: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean train mask; each group contributes floor(frac*n) or one more, at random."""
    train = np.zeros(groups.size, dtype=bool)
    for g in sorted(set(groups.tolist())):
        idx = np.nonzero(groups == g)[0]
        target = frac * idx.size
        k = int(math.floor(target)) + int(rng.random() < target - math.floor(target))
        train[rng.permutation(idx)[:k]] = True
    return train


def average_deer_arrays(scores: np.ndarray, filters: np.ndarray) -> float:
    bona = scores[filters == BONAFIDE]
    attack_filters = sorted(set(filters.tolist()) - {BONAFIDE})
    return float(np.mean([deer(scores[filters == f], bona)[0] for f in attack_filters]))


def repeated_split_eval(table: ScoreTable, learner: str = "forest", train_fraction: float = 0.7,
                        repeats: int = 10, seed: int = 0, sources: Sequence[str] | None = None,
                        n_trees: int = 100, regularization: float = 1e-3,
                        epochs: int = 20) -> RepeatedSplitReport:
    """Train ``learner`` on score vectors over random stratified splits; report test average D-EER.

    Splits are stratified by (label, filter). A split whose training part lacks
    a class, or whose test part lacks bona fide samples or any filter, is
    redrawn, at most 100 times.
    """
    if learner not in ("forest", "margin", "svc"):
        raise DomainError(f"unknown learner {learner!r}")
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if repeats < 1:
        raise DomainError("repeats must be >= 1")
    sources = list(table.sources if sources is None else sources)
    _, X, filters, labels = table.matrix(sources)
    filters = np.array(filters, dtype=object)
    y = np.array([lab is Label.ATTACK for lab in labels], dtype=np.int8)
    all_filters = set(filters.tolist())
    if BONAFIDE not in all_filters or len(all_filters) < 2:
        raise DomainError("table needs bona fide samples and at least one attack filter")

    runs = []
    for r in range(repeats):
        rng = substream(seed, "split", r)
        for _ in range(MAX_REDRAWS):
            train = _stratified_split(filters, train_fraction, rng)
            test = ~train
            if (np.unique(y[train]).size == 2 and set(filters[test].tolist()) == all_filters):
                break
        else:
            raise DegenerateError(
                f"no valid split in {MAX_REDRAWS} draws at train_fraction={train_fraction}: "
                "a class or filter ends up empty"
            )
        if learner == "forest":
            model = train_forest(X[train], y[train], n_trees=n_trees, seed=int(substream(seed, "forest-run", r).integers(2**31)))
            scores = model.predict_proba(X[test])
        else:
            model = train_margin(X[train], y[train], regularization, epochs,
                                 seed=int(substream(seed, "margin-run", r).integers(2**31)))
            scores = model.decision_function(X[test])
        runs.append(average_deer_arrays(scores, filters[test]))
        log.info("split %d/%d: average D-EER %.4f", r + 1, repeats, runs[-1])
    arr = np.array(runs)
    return RepeatedSplitReport(tuple(runs), float(arr.mean()), float(arr.std()), learner, train_fraction)
