"""CART trees stored as flat node arrays.

Node ``i`` is a leaf when ``feature[i] == -1``. Internal nodes route
``x[feature] <= threshold`` to ``left`` and everything else to ``right``.
``cover`` holds the number of training rows (with bootstrap multiplicity)
that reached each node; Tree SHAP needs it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from flowlens.errors import ConfigError, ShapeError, SizeError

GINI, MSE = 0, 1
_CRITERIA = {"gini": GINI, "mse": MSE}


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    feature_subsample: str = "all"  # or "sqrt_d"
    criterion: str = "gini"  # "mse" for boosting stages

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.feature_subsample not in ("all", "sqrt_d"):
            raise ConfigError(f"feature_subsample must be 'all' or 'sqrt_d', got {self.feature_subsample!r}")
        if self.criterion not in _CRITERIA:
            raise ConfigError(f"criterion must be one of {sorted(_CRITERIA)}")


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray | None
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # preorder: parents precede children
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = check_features(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    # a lone tree is scored and explained like a one-member ensemble
    raw_score = predict
    predict_proba = predict

    def tree_terms(self):
        return 0.0, [(self, 1.0)]

    def expected_value(self) -> float:
        """Cover-weighted mean of the leaf values."""
        if self.cover is None:
            raise ValueError("tree has no cover metadata")
        leaves = self.feature < 0
        return float(np.dot(self.cover[leaves], self.value[leaves]) / self.cover[0])


def check_features(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"expected rows with {n_features} features, got shape {X.shape}")
    return X


@numba.njit(cache=True)
def _best_split(X, y, w, idx, features, criterion, min_leaf):
    """Scan midpoint thresholds of ``features`` for the largest impurity decrease.

    Returns ``(feature, threshold, gain)``; feature is -1 when no threshold
    leaves ``min_leaf`` rows on both sides. Equal gains keep the earliest
    candidate, i.e. the lowest feature index and then the lowest threshold.
    """
    n = idx.shape[0]
    wt = 0.0
    s1 = 0.0
    s2 = 0.0
    for j in range(n):
        i = idx[j]
        wt += w[i]
        s1 += w[i] * y[i]
        s2 += w[i] * y[i] * y[i]
    if criterion == 0:
        parent = wt - (s1 * s1 + (wt - s1) * (wt - s1)) / wt if wt > 0 else 0.0
    else:
        parent = s2 - s1 * s1 / wt if wt > 0 else 0.0
    tol = 1e-12 * (abs(parent) + 1e-300)

    best_f = -1
    best_t = 0.0
    best_gain = -np.inf
    xs = np.empty(n)
    for f in features:
        for j in range(n):
            xs[j] = X[idx[j], f]
        order = np.argsort(xs, kind="mergesort")
        wl = 0.0
        s1l = 0.0
        s2l = 0.0
        for j in range(n - 1):
            i = idx[order[j]]
            wl += w[i]
            s1l += w[i] * y[i]
            s2l += w[i] * y[i] * y[i]
            a = xs[order[j]]
            b = xs[order[j + 1]]
            if a == b:
                continue
            nl = j + 1
            if nl < min_leaf or n - nl < min_leaf:
                continue
            wr = wt - wl
            s1r = s1 - s1l
            if criterion == 0:
                child = 0.0
                if wl > 0:
                    child += wl - (s1l * s1l + (wl - s1l) * (wl - s1l)) / wl
                if wr > 0:
                    child += wr - (s1r * s1r + (wr - s1r) * (wr - s1r)) / wr
            else:
                child = 0.0
                if wl > 0:
                    child += s2l - s1l * s1l / wl
                if wr > 0:
                    child += (s2 - s2l) - s1r * s1r / wr
            gain = parent - child
            if gain > best_gain + tol:
                best_gain = gain
                best_f = f
                thr = a + (b - a) / 2.0
                # guard against midpoint rounding onto the upper value
                best_t = thr if thr < b else a
    return best_f, best_t, best_gain


def gini(weights_by_class) -> float:
    """Gini impurity ``1 - sum p_c^2`` of a class-weight vector."""
    c = np.asarray(weights_by_class, dtype=float)
    p = c / c.sum()
    return float(1.0 - np.sum(p * p))


def _leaf_value(y, w, criterion):
    wt = w.sum()
    if wt > 0:
        return float(np.dot(w, y) / wt)
    return float(y.mean())


def fit_tree(X, y, sample_weight=None, params: TreeParams = TreeParams(),
             rng: np.random.Generator | int | None = None) -> Tree:
    """Greedy recursive partitioning, nodes emitted in preorder.

    Classification trees (``criterion="gini"``) store the weighted positive
    fraction in each leaf; regression trees store the weighted mean target.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n == 0:
        raise SizeError("cannot fit a tree on zero rows")
    if y.shape != (n,):
        raise ShapeError(f"y shape {y.shape} does not match {n} rows")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if w.shape != (n,):
        raise ShapeError("sample_weight must have one entry per row")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("sample weights must be non-negative and not all zero")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    criterion = _CRITERIA[params.criterion]
    n_sub = d if params.feature_subsample == "all" else int(math.ceil(math.sqrt(d)))
    max_depth = np.inf if params.max_depth is None else params.max_depth

    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(y[idx], w[idx], criterion))
        cover.append(float(idx.size))
        return len(feature) - 1

    def is_pure(idx):
        yy, ww = y[idx], w[idx]
        if criterion == GINI:
            return ww[yy == 1].sum() == 0 or ww[yy == 0].sum() == 0
        return np.all(yy == yy[0])

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < params.min_samples_split or is_pure(idx):
            continue
        sub = X[idx]
        varying = np.flatnonzero(sub.max(axis=0) > sub.min(axis=0))
        if varying.size == 0:
            continue
        if n_sub < d:
            perm = rng.permutation(d)
            candidates = np.sort(perm[np.isin(perm, varying)][:n_sub])
        else:
            candidates = varying
        f, t, _ = _best_split(X, y, w, idx, candidates.astype(np.int64), criterion, params.min_samples_leaf)
        if f < 0:
            continue
        go_left = X[idx, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(f), float(t)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return _renumber_preorder(Tree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(cover), d,
    ))


def _renumber_preorder(tree: Tree) -> Tree:
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if tree.feature[i] >= 0:
            stack.append(tree.right[i])
            stack.append(tree.left[i])
    order = np.array(order, dtype=np.int64)
    new_id = np.empty_like(order)
    new_id[order] = np.arange(order.size)
    remap = lambda a: np.where(a[order] >= 0, new_id[np.maximum(a[order], 0)], -1)
    return Tree(tree.feature[order], tree.threshold[order], remap(tree.left), remap(tree.right),
                tree.value[order], None if tree.cover is None else tree.cover[order], tree.n_features)

