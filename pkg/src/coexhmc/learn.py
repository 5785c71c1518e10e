"""Multi-output random forests and multi-label stratified folds.

Trees are grown with scikit-learn's CART builder and immediately copied into
plain arrays (:class:`Tree`); prediction, attribution and persistence only
use those arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .errors import DegenerateLabels, FeatureMismatch, TooFewSamples

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    min_samples_split: int = 5
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    @staticmethod
    def max_features(n_features: int) -> int:
        return max(1, math.ceil(math.sqrt(n_features)))


@dataclass
class Tree:
    """Binary tree in array form; ``left[i] == -1`` marks a leaf.

    ``value[i]`` holds the positive-class fraction of every label at node
    ``i``; ``cover[i]`` the (bootstrap-weighted) training mass reaching it.
    """

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.left[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.left[node[idx]] >= 0
        return node


@dataclass
class Forest:
    trees: list[Tree]
    label_ids: tuple[str, ...]
    feature_ids: tuple[str, ...]
    params: ForestParams = field(default_factory=ForestParams)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    @property
    def n_labels(self) -> int:
        return len(self.label_ids)


def _as_features(X) -> np.ndarray:
    # the tree builder compares float32 copies of the features; mirror that here
    return np.asarray(X, dtype=np.float32).astype(np.float64)


def _positive_fraction(est, forest_classes, n_labels: int) -> np.ndarray:
    # trees see labels re-encoded as class indices; the forest keeps the originals
    raw = est.tree_.value  # (nodes, outputs, max_classes)
    classes = forest_classes if n_labels > 1 else [forest_classes]
    out = np.zeros((raw.shape[0], n_labels))
    for j, cls in enumerate(classes):
        counts = raw[:, j, : len(cls)]
        total = counts.sum(axis=1)
        pos = np.flatnonzero(np.asarray(cls) == 1)
        if len(pos):
            out[:, j] = counts[:, pos[0]] / np.where(total > 0, total, 1.0)
    return out


def fit(features, labels, params: ForestParams = ForestParams(), label_ids=None, feature_ids=None) -> Forest:
    X = _as_features(features)
    Y = np.asarray(labels)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = (Y > 0).astype(np.int64)
    if X.ndim != 2 or len(X) != len(Y):
        raise FeatureMismatch(f"features {X.shape} and labels {Y.shape} are not row-aligned")
    if not Y.any() or Y.all():
        raise DegenerateLabels("labels need at least one positive and one negative entry")
    n_labels = Y.shape[1]
    rf = RandomForestClassifier(
        n_estimators=params.n_trees,
        criterion="gini",
        min_samples_split=params.min_samples_split,
        min_samples_leaf=1,
        max_depth=None,
        max_features=ForestParams.max_features(X.shape[1]),
        bootstrap=params.bootstrap,
        random_state=params.seed % 2**32,
        n_jobs=params.n_jobs,
    )
    rf.fit(X, Y if n_labels > 1 else Y[:, 0])
    trees = []
    for est in rf.estimators_:
        t = est.tree_
        trees.append(
            Tree(
                left=t.children_left.astype(np.int64),
                right=t.children_right.astype(np.int64),
                feature=np.where(t.children_left >= 0, t.feature, -1).astype(np.int64),
                threshold=np.where(t.children_left >= 0, t.threshold, 0.0).astype(np.float64),
                value=_positive_fraction(est, rf.classes_, n_labels),
                cover=t.weighted_n_node_samples.astype(np.float64),
            )
        )
    label_ids = tuple(label_ids) if label_ids is not None else tuple(str(i) for i in range(n_labels))
    feature_ids = tuple(feature_ids) if feature_ids is not None else tuple(str(i) for i in range(X.shape[1]))
    if len(label_ids) != n_labels or len(feature_ids) != X.shape[1]:
        raise FeatureMismatch("label_ids / feature_ids do not match the training data")
    return Forest(trees, label_ids, feature_ids, params)


def predict_proba(forest: Forest, features) -> np.ndarray:
    """Mean leaf positive fraction across trees, shape ``(rows, labels)``."""
    X = _as_features(features)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise FeatureMismatch(f"forest expects {forest.n_features} features, got {X.shape}")
    out = np.zeros((len(X), forest.n_labels))
    for tree in forest.trees:
        out += tree.value[tree.apply(X)]
    return out / len(forest.trees)


def save_forest(forest: Forest, path) -> None:
    arrays = {}
    for i, t in enumerate(forest.trees):
        for name in ("left", "right", "feature", "threshold", "value", "cover"):
            arrays[f"t{i}_{name}"] = getattr(t, name)
    meta = {
        "format_version": FORMAT_VERSION,
        "n_trees": len(forest.trees),
        "label_ids": list(forest.label_ids),
        "feature_ids": list(forest.feature_ids),
        "params": asdict(forest.params),
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_forest(path) -> Forest:
    with np.load(path) as data:
        meta = json.loads(data["meta"].tobytes().decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format {meta.get('format_version')}")
        trees = [
            Tree(*(data[f"t{i}_{name}"] for name in ("left", "right", "feature", "threshold", "value", "cover")))
            for i in range(meta["n_trees"])
        ]
    return Forest(trees, tuple(meta["label_ids"]), tuple(meta["feature_ids"]), ForestParams(**meta["params"]))


@dataclass
class FoldPlan:
    assignments: np.ndarray  # fold index per row

    @property
    def n_folds(self) -> int:
        return int(self.assignments.max()) + 1

    def splits(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for f in range(self.n_folds):
            test = self.assignments == f
            yield np.flatnonzero(~test), np.flatnonzero(test)


def stratified_kfold(labels, k_folds: int, seed: int = 0) -> FoldPlan:
    """Iterative stratification for multi-label data.

    Labels are handled rarest first; each positive row goes to the open fold
    with the largest remaining demand for that label (then largest overall
    demand, then a seeded random choice). Fold sizes never differ by more
    than one.
    """
    Y = np.asarray(labels) > 0
    if Y.ndim == 1:
        Y = Y[:, None]
    n, n_labels = Y.shape
    if k_folds < 2 or k_folds > n:
        raise TooFewSamples(f"cannot split {n} rows into {k_folds} folds")
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, k_folds)
    size = np.zeros(k_folds, dtype=np.int64)
    n_big = 0  # folds already holding base + 1 rows
    demand = np.full(k_folds, n / k_folds)
    label_demand = np.outer(np.full(k_folds, 1.0 / k_folds), Y.sum(axis=0))  # (folds, labels)
    fold = np.full(n, -1, dtype=np.int64)
    remaining = Y.copy()
    unassigned = np.ones(n, dtype=bool)

    def open_folds():
        ok = size < base
        if n_big < extra:
            ok |= size == base
        return np.flatnonzero(ok)

    def place(row, candidates, score_label=None):
        nonlocal n_big
        cand = candidates
        if score_label is not None:
            d = label_demand[cand, score_label]
            cand = cand[d == d.max()]
        d = demand[cand]
        cand = cand[d == d.max()]
        f = int(cand[rng.integers(len(cand))]) if len(cand) > 1 else int(cand[0])
        fold[row] = f
        if size[f] == base:
            n_big += 1
        size[f] += 1
        demand[f] -= 1
        label_demand[f] -= Y[row]
        unassigned[row] = False
        remaining[row] = False

    while remaining.any():
        counts = remaining.sum(axis=0)
        counts = np.where(counts > 0, counts, np.iinfo(np.int64).max)
        lab = int(np.argmin(counts))
        rows = np.flatnonzero(remaining[:, lab])
        for row in rng.permutation(rows):
            place(row, open_folds(), lab)
    for row in rng.permutation(np.flatnonzero(unassigned)):
        place(row, open_folds())
    return FoldPlan(fold)
