"""Bagged forest of CART trees with per-split sqrt(d) feature subsampling."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from flowlens.errors import ConfigError, SizeError
from flowlens.models.tree import Tree, TreeParams, check_features, fit_tree


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    params: TreeParams = field(default_factory=TreeParams)
    bootstrap: bool = True

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def raw_score(self, X) -> np.ndarray:
        """Mean leaf probability across trees."""
        X = check_features(X, self.n_features)
        # sequential accumulation: same summation order for any batch size
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        return self.raw_score(X)

    def tree_terms(self):
        """``(offset, [(tree, scale), ...])`` such that raw_score = offset + sum(scale * tree)."""
        return 0.0, [(t, 1.0 / len(self.trees)) for t in self.trees]


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(tree_index)])


def fit_random_forest(X, y, n_trees: int = 100, params: TreeParams | None = None, seed: int = 0,
                      bootstrap: bool = True, n_jobs: int = 1) -> ForestModel:
    """Fit ``n_trees`` trees on N-row bootstrap draws.

    Tree ``t`` draws its bootstrap and split features from a generator
    seeded by ``(seed, t)`` alone, so the fitted forest does not depend on
    ``n_jobs`` or thread scheduling.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if X.ndim != 2 or X.shape[0] == 0:
        raise SizeError("cannot fit a forest on empty data")
    params = params or TreeParams(feature_subsample="sqrt_d")
    n = X.shape[0]

    def grow(t):
        rng = tree_rng(seed, t)
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            return fit_tree(X[idx], y[idx], params=params, rng=rng)
        return fit_tree(X, y, params=params, rng=rng)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return ForestModel(trees, params, bootstrap)
