"""CART regression trees and the ensembles built from them.

Trees are grown depth-first with the classic variance-reduction criterion:
every split minimizes the summed within-child squared error, candidate cuts
are midpoints between consecutive distinct values of a feature, and leaves
predict the mean target of their samples. Growth stops at max_depth, below
min_samples_split, or when no cut improves the error.

The grow/predict kernels are numba-compiled; trees are stored flat as node
arrays so a whole ensemble predicts in one pass. Everything is seeded
explicitly and single-threaded, so results are bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_GAIN_EPS = 1e-12


@njit(cache=True)
def _grow_tree(X, y, sample_idx, max_depth, min_samples_split, mtry, seed):
    n = sample_idx.shape[0]
    d = X.shape[1]
    if mtry < d:
        np.random.seed(seed)
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)

    idx = sample_idx.copy()
    stack_start = np.empty(max_nodes, np.int64)
    stack_end = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_node = np.empty(max_nodes, np.int64)
    feat_pool = np.empty(d, np.int64)
    vals = np.empty(n, np.float64)
    tmp_buf = np.empty(n, np.int64)

    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    stack_node[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        node = stack_node[top]
        m = end - start

        s = 0.0
        for i in range(start, end):
            s += y[idx[i]]
        value[node] = s / m

        if depth >= max_depth or m < min_samples_split:
            continue
        y0 = y[idx[start]]
        const_y = True
        for i in range(start + 1, end):
            if y[idx[i]] != y0:
                const_y = False
                break
        if const_y:
            continue

        n_feats = d
        for j in range(d):
            feat_pool[j] = j
        if mtry < d:
            n_feats = mtry
            for j in range(n_feats):
                r = j + np.random.randint(0, d - j)
                tmp = feat_pool[j]
                feat_pool[j] = feat_pool[r]
                feat_pool[r] = tmp

        base = s * s / m
        best_gain = _GAIN_EPS
        best_feat = -1
        best_thr = 0.0
        for jj in range(n_feats):
            f = feat_pool[jj]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            cum = 0.0
            for i in range(m - 1):
                oi = order[i]
                cum += y[idx[start + oi]]
                v_here = vals[oi]
                v_next = vals[order[i + 1]]
                if v_next > v_here:
                    n_left = i + 1
                    n_right = m - n_left
                    s_right = s - cum
                    gain = cum * cum / n_left + s_right * s_right / n_right - base
                    if gain > best_gain:
                        thr = 0.5 * (v_here + v_next)
                        # Guard against the midpoint collapsing onto a
                        # neighbour for adjacent floats.
                        if thr <= v_here or thr >= v_next:
                            thr = v_here
                        best_gain = gain
                        best_feat = f
                        best_thr = thr
        if best_feat < 0:
            continue

        for i in range(m):
            tmp_buf[i] = idx[start + i]
        k = 0
        for i in range(m):
            if X[tmp_buf[i], best_feat] <= best_thr:
                idx[start + k] = tmp_buf[i]
                k += 1
        n_left = k
        for i in range(m):
            if X[tmp_buf[i], best_feat] > best_thr:
                idx[start + k] = tmp_buf[i]
                k += 1

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        stack_node[top] = lid
        top += 1
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1
        stack_node[top] = rid
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _predict_ensemble(Xq, feature, threshold, left, right, value, roots, out):
    # Node arrays are the concatenation of all trees; child links are global.
    n_points = Xq.shape[0]
    n_trees = roots.shape[0]
    for p in range(n_points):
        acc = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feature[node] >= 0:
                if Xq[p, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[p] = acc


_SINGLE_ROOT = np.zeros(1, dtype=np.int64)


def _tree_predict(X, tree) -> np.ndarray:
    feature, threshold, left, right, value = tree
    out = np.zeros(X.shape[0], dtype=np.float64)
    _predict_ensemble(X, feature, threshold, left, right, value, _SINGLE_ROOT, out)
    return out


class TreeEnsemble:
    """A flat, additively combined collection of regression trees.

    predict(X) = offset + scale * sum over trees of leaf values. A single
    tree uses scale 1; a random forest uses scale 1/n_trees; boosted stages
    share the learning rate as scale with the base prediction as offset.
    """

    def __init__(self, feature, threshold, left, right, value, roots, offset, scale):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.roots = roots
        self.offset = float(offset)
        self.scale = float(scale)

    @classmethod
    def from_trees(cls, trees, offset: float, scale: float) -> "TreeEnsemble":
        roots = []
        base = 0
        feats, thrs, lefts, rights, values = [], [], [], [], []
        for feature, threshold, left, right, value in trees:
            roots.append(base)
            feats.append(feature)
            thrs.append(threshold)
            lefts.append(np.where(left >= 0, left + base, left).astype(np.int32))
            rights.append(np.where(right >= 0, right + base, right).astype(np.int32))
            values.append(value)
            base += len(feature)
        return cls(
            np.concatenate(feats) if feats else np.empty(0, np.int32),
            np.concatenate(thrs) if thrs else np.empty(0, np.float64),
            np.concatenate(lefts) if lefts else np.empty(0, np.int32),
            np.concatenate(rights) if rights else np.empty(0, np.int32),
            np.concatenate(values) if values else np.empty(0, np.float64),
            np.asarray(roots, dtype=np.int64),
            offset,
            scale,
        )

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0], dtype=np.float64)
        if self.n_trees:
            _predict_ensemble(
                np.ascontiguousarray(X, dtype=np.float64),
                self.feature,
                self.threshold,
                self.left,
                self.right,
                self.value,
                self.roots,
                out,
            )
        return self.offset + self.scale * out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "roots": self.roots.tolist(),
            "offset": self.offset,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            np.asarray(d["feature"], np.int32),
            np.asarray(d["threshold"], np.float64),
            np.asarray(d["left"], np.int32),
            np.asarray(d["right"], np.int32),
            np.asarray(d["value"], np.float64),
            np.asarray(d["roots"], np.int64),
            d["offset"],
            d["scale"],
        )


def warm_up_kernels() -> None:
    """Trigger numba compilation once so later calls are pure run time."""
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 1.0, 2.0, 3.0])
    fit_decision_tree(X, y, 2, 2).predict(X)


def _grow(X, y, sample_idx, max_depth, min_samples_split, mtry, seed):
    return _grow_tree(
        X,
        y,
        np.ascontiguousarray(sample_idx, dtype=np.int64),
        np.int64(max_depth),
        np.int64(min_samples_split),
        np.int64(mtry),
        np.int64(seed),
    )


def fit_decision_tree(X, y, max_depth: int, min_samples_split: int) -> TreeEnsemble:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    tree = _grow(X, y, np.arange(len(y)), max_depth, min_samples_split, X.shape[1], 0)
    return TreeEnsemble.from_trees([tree], offset=0.0, scale=1.0)


def fit_random_forest(
    X,
    y,
    n_trees: int,
    max_depth: int,
    min_samples_split: int,
    bootstrap: bool,
    max_features,
    seed: int,
) -> TreeEnsemble:
    """Bagged trees; per-tree bootstrap resample and per-split feature subsample.

    max_features=None uses the ceil(d/3) regression default. Per-tree seed
    streams come from one SeedSequence so the forest is reproducible
    independent of evaluation order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    mtry = math.ceil(d / 3) if max_features is None else int(max_features)
    mtry = min(max(mtry, 1), d)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            sample_idx = rng.integers(0, n, size=n)
        else:
            sample_idx = np.arange(n)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(_grow(X, y, sample_idx, max_depth, min_samples_split, mtry, tree_seed))
    return TreeEnsemble.from_trees(trees, offset=0.0, scale=1.0 / n_trees)


def fit_gradient_boosting(
    X,
    y,
    n_estimators: int,
    learning_rate: float,
    max_depth: int,
    min_samples_split: int,
    subsample: float,
    seed: int,
):
    """Stagewise squared-error boosting with shrinkage.

    The base prediction is the mean target; each stage fits a depth-limited
    tree to the current residuals on a `subsample` fraction of rows drawn
    without replacement. Returns (ensemble, per-stage training rmse).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    f0 = float(y.mean())
    current = np.full(n, f0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    m_sub = max(1, int(round(subsample * n)))
    trees = []
    staged_rmse = []
    for _ in range(n_estimators):
        residual = y - current
        if subsample >= 1.0:
            sample_idx = np.arange(n)
        else:
            sample_idx = np.sort(rng.choice(n, size=m_sub, replace=False))
        tree = _grow(X, residual, sample_idx, max_depth, min_samples_split, d, 0)
        trees.append(tree)
        current = current + learning_rate * _tree_predict(X, tree)
        staged_rmse.append(float(np.sqrt(np.mean((y - current) ** 2))))
    ens = TreeEnsemble.from_trees(trees, offset=f0, scale=learning_rate)
    return ens, staged_rmse
