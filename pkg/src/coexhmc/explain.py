"""Path-dependent TreeSHAP attributions and cutoff-based feature selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import AllZeroImportance, FeatureMismatch
from .learn import Forest, _as_features


@dataclass
class AttributionMatrix:
    """``values[i, j, l]``: contribution of feature ``j`` to label ``l`` on instance ``i``."""

    values: np.ndarray = field(repr=False)
    base_values: np.ndarray


@numba.njit(cache=True)
def _extend(fi, zf, of, pw, off, depth, pz, po, pidx):
    fi[off + depth] = pidx
    zf[off + depth] = pz
    of[off + depth] = po
    pw[off + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[off + i + 1] += po * pw[off + i] * (i + 1) / (depth + 1)
        pw[off + i] = pz * pw[off + i] * (depth - i) / (depth + 1)


@numba.njit(cache=True)
def _unwind(fi, zf, of, pw, off, depth, k):
    o = of[off + k]
    z = zf[off + k]
    nxt = pw[off + depth]
    for j in range(depth - 1, -1, -1):
        if o != 0.0:
            tmp = pw[off + j]
            pw[off + j] = nxt * (depth + 1) / ((j + 1) * o)
            nxt = tmp - pw[off + j] * z * (depth - j) / (depth + 1)
        else:
            pw[off + j] = pw[off + j] * (depth + 1) / (z * (depth - j))
    for j in range(k, depth):
        fi[off + j] = fi[off + j + 1]
        zf[off + j] = zf[off + j + 1]
        of[off + j] = of[off + j + 1]


@numba.njit(cache=True)
def _unwound_sum(zf, of, pw, off, depth, k):
    o = of[off + k]
    z = zf[off + k]
    total = 0.0
    if o != 0.0:
        nxt = pw[off + depth]
        for j in range(depth - 1, -1, -1):
            tmp = nxt / ((j + 1) * o)
            total += tmp
            nxt = pw[off + j] - tmp * z * (depth - j)
    elif z != 0.0:
        for j in range(depth - 1, -1, -1):
            total += pw[off + j] / (z * (depth - j))
    return total * (depth + 1)


@numba.njit(cache=True)
def _tree_shap_one(x, left, right, feature, threshold, value, cover, phi, fi, zf, of, pw, stack_i, stack_f):
    # Depth-first walk with an explicit stack. A frame is (node, parent segment
    # offset, depth, pidx) + (zero fraction, one fraction). Each frame owns
    # buf[off : off + depth + 1], placed after its parent's segment, so a
    # subtree never overwrites the segment its later sibling copies from.
    n_labels = value.shape[1]
    top = 0
    stack_i[0, 0] = 0
    stack_i[0, 1] = -1
    stack_i[0, 2] = 0
    stack_i[0, 3] = -1
    stack_f[0, 0] = 1.0
    stack_f[0, 1] = 1.0
    top = 1
    while top > 0:
        top -= 1
        node = stack_i[top, 0]
        parent_off = stack_i[top, 1]
        depth = stack_i[top, 2]
        pidx = stack_i[top, 3]
        pz = stack_f[top, 0]
        po = stack_f[top, 1]
        off = parent_off + depth + 1
        for i in range(depth):
            fi[off + i] = fi[parent_off + i]
            zf[off + i] = zf[parent_off + i]
            of[off + i] = of[parent_off + i]
            pw[off + i] = pw[parent_off + i]
        _extend(fi, zf, of, pw, off, depth, pz, po, pidx)
        if left[node] < 0:
            for i in range(1, depth + 1):
                w = _unwound_sum(zf, of, pw, off, depth, i) * (of[off + i] - zf[off + i])
                f = fi[off + i]
                for lab in range(n_labels):
                    phi[f, lab] += w * value[node, lab]
            continue
        split = feature[node]
        if x[split] <= threshold[node]:
            hot = left[node]
            cold = right[node]
        else:
            hot = right[node]
            cold = left[node]
        iz = 1.0
        io = 1.0
        k = 1
        while k <= depth:
            if fi[off + k] == split:
                break
            k += 1
        if k <= depth:
            iz = zf[off + k]
            io = of[off + k]
            _unwind(fi, zf, of, pw, off, depth, k)
            depth -= 1
        # cold pushed first so the hot subtree is finished before cold copies the segment
        stack_i[top, 0] = cold
        stack_i[top, 1] = off
        stack_i[top, 2] = depth + 1
        stack_i[top, 3] = split
        stack_f[top, 0] = iz * cover[cold] / cover[node]
        stack_f[top, 1] = 0.0
        top += 1
        stack_i[top, 0] = hot
        stack_i[top, 1] = off
        stack_i[top, 2] = depth + 1
        stack_i[top, 3] = split
        stack_f[top, 0] = iz * cover[hot] / cover[node]
        stack_f[top, 1] = io
        top += 1


@numba.njit(cache=True)
def _tree_shap_batch(X, left, right, feature, threshold, value, cover, max_depth, out):
    size = (max_depth + 2) * (max_depth + 3)
    fi = np.zeros(size, dtype=np.int64)
    zf = np.zeros(size)
    of = np.zeros(size)
    pw = np.zeros(size)
    stack_i = np.zeros((2 * max_depth + 2, 4), dtype=np.int64)
    stack_f = np.zeros((2 * max_depth + 2, 2))
    for r in range(X.shape[0]):
        _tree_shap_one(X[r], left, right, feature, threshold, value, cover, out[r],
                       fi, zf, of, pw, stack_i, stack_f)


def expected_value(tree) -> np.ndarray:
    """Cover-weighted mean of the leaf values: the tree's output with no feature known."""
    leaves = tree.left < 0
    w = tree.cover[leaves]
    return (tree.value[leaves] * w[:, None]).sum(axis=0) / w.sum()


def tree_shap(forest: Forest, instances) -> AttributionMatrix:
    """Exact path-dependent Shapley values, averaged over the forest's trees.

    Local accuracy holds: ``base_values + values.sum(axis=1)`` equals
    :func:`learn.predict_proba` on the same rows.
    """
    X = _as_features(instances)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise FeatureMismatch(f"forest expects {forest.n_features} features, got {X.shape}")
    # attributions depend on the row only; genes of one cluster share rows
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    uniq = np.ascontiguousarray(uniq)
    total = np.zeros((len(uniq), forest.n_features, forest.n_labels))
    base = np.zeros(forest.n_labels)
    buf = np.zeros_like(total)
    for t in forest.trees:
        buf[:] = 0.0
        _tree_shap_batch(uniq, t.left, t.right, t.feature, t.threshold,
                         np.ascontiguousarray(t.value), t.cover, t.max_depth, buf)
        total += buf
        base += expected_value(t)
    n = len(forest.trees)
    return AttributionMatrix(total[inverse.ravel()] / n, base / n)


def mean_abs_importance(att: AttributionMatrix) -> np.ndarray:
    """Mean |attribution| per feature, pooled over instances and labels."""
    v = np.abs(att.values)
    if v.size == 0:
        raise ValueError("empty attribution matrix")
    return v.mean(axis=(0, 2))


@dataclass
class SelectionResult:
    selected_columns: list[int]
    theta: int
    importance: np.ndarray = field(repr=False)
    cutoff: float = 0.9


_REL_TOL = 1e-12


def select_features(importance, c: float) -> SelectionResult:
    """Smallest prefix of the columns, by decreasing importance, whose sum reaches ``c`` of the total.

    Ties are ordered by column index. Sums are compared with a relative
    slack of 1e-12 so that e.g. 0.6 + 0.3 reaches 0.9 of 1.0.
    """
    imp = np.asarray(importance, dtype=float)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"cutoff {c} not in [0, 1]")
    if np.any(imp < 0):
        raise ValueError("importances must be nonnegative")
    order = np.lexsort((np.arange(len(imp)), -imp))
    total = float(imp.sum())
    if total <= 0.0:
        warnings.warn("all feature importances are zero", AllZeroImportance, stacklevel=2)
        return SelectionResult([], 0, imp, c)
    if c >= 1.0:
        theta = int(np.count_nonzero(imp))
    else:
        cum = np.cumsum(imp[order])
        reached = cum >= c * total - _REL_TOL * total
        theta = max(1, int(np.argmax(reached)) + 1)
    return SelectionResult([int(i) for i in order[:theta]], theta, imp, c)
