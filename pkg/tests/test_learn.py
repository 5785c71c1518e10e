import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexhmc.errors import DegenerateLabels, FeatureMismatch, TooFewSamples
from coexhmc.learn import (
    Forest,
    ForestParams,
    Tree,
    fit,
    load_forest,
    predict_proba,
    save_forest,
    stratified_kfold,
)


def test_params_validation_and_feature_rule():
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        ForestParams(min_samples_split=1)
    assert [ForestParams.max_features(n) for n in (1, 4, 5, 10, 120)] == [1, 2, 3, 4, 11]


def test_separable_feature():
    y = np.arange(100) % 2
    x = (y + 0.3 * np.random.default_rng(0).random(100))[:, None]
    f = fit(x, y, ForestParams(n_trees=50, seed=1))
    p = predict_proba(f, x)[:, 0]
    assert np.all(np.where(y == 1, p, 1 - p) >= 0.95)


def test_identical_rows_predict_prior():
    X = np.zeros((200, 3))
    y = np.arange(200) % 2
    p = predict_proba(fit(X, y, ForestParams(n_trees=100, seed=2)), X[:1])
    assert p[0, 0] == pytest.approx(0.5, abs=0.1)


def test_same_seed_same_forest():
    rng = np.random.default_rng(0)
    X, Y = rng.random((60, 5)), rng.random((60, 3)) < 0.4
    a = fit(X, Y, ForestParams(n_trees=10, seed=4))
    b = fit(X, Y, ForestParams(n_trees=10, seed=4))
    for ta, tb in zip(a.trees, b.trees):
        for name in ("left", "right", "feature", "threshold", "value", "cover"):
            assert np.array_equal(getattr(ta, name), getattr(tb, name))


def stump(values):
    return Tree(
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        feature=np.array([0, -1, -1]),
        threshold=np.array([0.5, 0, 0]),
        value=np.array(values, dtype=float).reshape(3, 1),
        cover=np.array([2.0, 1.0, 1.0]),
    )


def test_single_stump_and_mean_of_trees():
    one = Forest([stump([0.2, 0.2, 0.2])], ("a",), ("x",))
    assert predict_proba(one, [[0.0]])[0, 0] == pytest.approx(0.2)
    two = Forest([stump([0.0, 0.0, 0.0]), stump([1.0, 1.0, 1.0])], ("a",), ("x",))
    assert predict_proba(two, [[0.7]])[0, 0] == 0.5


def test_training_points_in_pure_leaf_forest_match_labels():
    # every feature separates the classes, so each tree's leaves are pure
    rng = np.random.default_rng(3)
    y = rng.random(100) < 0.5
    X = 2.0 * y[:, None] + 0.5 * rng.random((100, 3))
    p = predict_proba(fit(X, y, ForestParams(n_trees=200, seed=0)), X)[:, 0]
    assert np.all(np.abs(p - y) <= 0.05)


def test_training_points_mostly_match_on_overlapping_classes():
    rng = np.random.default_rng(3)
    X = rng.random((80, 4))
    y = (X[:, 0] + X[:, 1] > 1).astype(int)
    p = predict_proba(fit(X, y, ForestParams(n_trees=200, seed=0)), X)[:, 0]
    assert np.mean(np.abs(p - y) <= 0.05) > 0.5
    assert np.all(np.abs(p - y) < 0.5)


def test_degenerate_and_mismatch():
    X = np.random.default_rng(0).random((10, 2))
    with pytest.raises(DegenerateLabels):
        fit(X, np.zeros(10))
    f = fit(X, np.arange(10) % 2, ForestParams(n_trees=3))
    with pytest.raises(FeatureMismatch):
        predict_proba(f, np.zeros((2, 3)))


def test_constant_label_column_is_allowed():
    X = np.random.default_rng(0).random((20, 2))
    Y = np.column_stack([np.arange(20) % 2, np.ones(20), np.zeros(20)])
    p = predict_proba(fit(X, Y, ForestParams(n_trees=5)), X)
    assert np.all(p[:, 1] == 1.0) and np.all(p[:, 2] == 0.0)


def test_row_independent_of_batch():
    rng = np.random.default_rng(5)
    X, Y = rng.random((50, 4)), rng.random((50, 2)) < 0.5
    f = fit(X, Y, ForestParams(n_trees=20, seed=1))
    batch = predict_proba(f, X)
    for i in (0, 17, 49):
        assert np.array_equal(predict_proba(f, X[i : i + 1])[0], batch[i])


def test_gini_gain_nonnegative():
    rng = np.random.default_rng(6)
    X, Y = rng.random((70, 5)), rng.random((70, 3)) < 0.3
    f = fit(X, Y, ForestParams(n_trees=10, seed=3))

    def gini(t, i):
        p = t.value[i]
        return float(np.sum(2 * p * (1 - p)))

    for t in f.trees:
        for i in np.flatnonzero(t.left >= 0):
            l, r = t.left[i], t.right[i]
            child = (t.cover[l] * gini(t, l) + t.cover[r] * gini(t, r)) / t.cover[i]
            assert gini(t, i) - child >= -1e-12


def test_serialisation_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    X, Y = rng.random((40, 3)), rng.random((40, 2)) < 0.5
    f = fit(X, Y, ForestParams(n_trees=7, seed=8), label_ids=["a", "b"], feature_ids=["G|a|2", "F|a|2", "G|b|2"])
    save_forest(f, tmp_path / "f.npz")
    g = load_forest(tmp_path / "f.npz")
    assert g.label_ids == f.label_ids and g.feature_ids == f.feature_ids and g.params == f.params
    assert np.array_equal(predict_proba(g, X), predict_proba(f, X))
    for ta, tb in zip(f.trees, g.trees):
        assert np.array_equal(ta.threshold, tb.threshold) and np.array_equal(ta.value, tb.value)


def test_folds_single_label_exact():
    y = np.array([1] * 10 + [0] * 10)
    plan = stratified_kfold(y, 5, seed=0)
    for _, test in plan.splits():
        assert len(test) == 4 and y[test].sum() == 2


def test_folds_pigeonhole():
    y = np.array([1] * 3 + [0] * 17)
    counts = sorted(int(y[test].sum()) for _, test in stratified_kfold(y, 5, seed=1).splits())
    assert counts == [0, 0, 1, 1, 1]


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        stratified_kfold(np.ones(3), 5)


@given(st.integers(5, 60), st.integers(1, 5), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_folds_partition_and_balance(n, n_labels, k, seed):
    if k > n:
        return
    Y = np.random.default_rng(seed).random((n, n_labels)) < 0.3
    plan = stratified_kfold(Y, k, seed)
    sizes = np.bincount(plan.assignments, minlength=k)
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    seen = np.concatenate([test for _, test in plan.splits()])
    assert sorted(seen) == list(range(n))
    # the rarest label is placed first, so its positives spread evenly
    counts = Y.sum(axis=0)
    if counts.any():
        rarest = np.argmin(np.where(counts > 0, counts, n + 1))
        per_fold = np.bincount(plan.assignments[Y[:, rarest]], minlength=k)
        assert per_fold.max() - per_fold.min() <= 1
