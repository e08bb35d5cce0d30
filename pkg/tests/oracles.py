"""Random tree models shared by the Shapley oracle tests and the acceptance suite."""

import numpy as np

from flowlens.models import TreeParams, fit_gradient_boosting, fit_random_forest, fit_tree


def random_tree_model(rng: np.random.Generator, kind: str, d: int, depth: int, n_trees: int = 1):
    """Fit a dt/rf/gb model on random data with a nonlinear label rule.

    Features are drawn on a coarse grid so duplicate values and ties occur.
    """
    n = int(rng.integers(40, 120))
    X = rng.integers(0, 6, size=(n, d)).astype(float) + rng.normal(0, 0.1, size=(n, d)) * (rng.random(d) < 0.5)
    w = rng.normal(size=d)
    y = ((X @ w + rng.normal(0, 1.0, n)) > np.median(X @ w)).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    seed = int(rng.integers(0, 2**31))
    if kind == "dt":
        return fit_tree(X, y, params=TreeParams(max_depth=depth), rng=seed), X
    if kind == "rf":
        return fit_random_forest(X, y, n_trees, TreeParams(max_depth=depth, feature_subsample="sqrt_d"),
                                 seed=seed), X
    return fit_gradient_boosting(X, y, n_stages=n_trees, learning_rate=0.3,
                                 params=TreeParams(max_depth=depth, criterion="mse"), seed=seed), X


def probe_rows(rng: np.random.Generator, X: np.ndarray, m: int) -> np.ndarray:
    """Mix of training rows and fresh points spanning the training range."""
    fresh = rng.uniform(X.min(axis=0) - 1, X.max(axis=0) + 1, size=(m, X.shape[1]))
    take = rng.random(m) < 0.5
    fresh[take] = X[rng.integers(0, X.shape[0], take.sum())]
    return fresh
