"""Gradient boosting on binary cross-entropy with Newton leaf values."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from flowlens.errors import ConfigError
from flowlens.models.tree import Tree, TreeParams, check_features, fit_tree

RATE_CLAMP = 1e-6


def log_loss(y, score) -> float:
    """Mean binary cross-entropy of margins ``score`` (numerically stable)."""
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


@dataclass(eq=False)
class BoostedModel:
    initial_score: float
    trees: list[Tree]
    learning_rate: float
    n_features: int
    loss_trace: list[float] = field(default_factory=list)

    def raw_score(self, X) -> np.ndarray:
        """Margin ``f_0 + lr * sum_m h_m(x)`` before the logistic link."""
        X = check_features(X, self.n_features)
        score = np.full(X.shape[0], self.initial_score)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(X)
        return score

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.raw_score(X))

    def tree_terms(self):
        return self.initial_score, [(t, self.learning_rate) for t in self.trees]


def _newton_leaves(tree: Tree, leaf_of_row, residual, hessian):
    values = tree.value.copy()
    for leaf in np.unique(leaf_of_row):
        m = leaf_of_row == leaf
        values[leaf] = residual[m].sum() / max(hessian[m].sum(), 1e-12)
    return values


def fit_gradient_boosting(X, y, n_stages: int = 100, learning_rate: float = 0.1,
                          params: TreeParams | None = None, seed: int = 0) -> BoostedModel:
    """Stagewise fit of regression trees to the pseudo-residuals ``y - sigmoid(F)``.

    Each stage takes a damped Newton step per leaf. A stage that would raise
    the training log-loss is halved until it does not (this almost never
    triggers at the default learning rate), so ``loss_trace`` is
    non-increasing.
    """
    if not 0.0 < learning_rate <= 1.0:
        raise ConfigError(f"learning_rate must lie in (0, 1], got {learning_rate}")
    if n_stages < 0:
        raise ConfigError(f"n_stages must be >= 0, got {n_stages}")
    params = params or TreeParams(max_depth=3, criterion="mse")
    if params.criterion != "mse":
        params = TreeParams(params.max_depth, params.min_samples_split, params.min_samples_leaf,
                            params.feature_subsample, "mse")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)

    rate = float(np.clip(y.mean(), RATE_CLAMP, 1 - RATE_CLAMP))
    f0 = float(np.log(rate / (1 - rate)))
    score = np.full(X.shape[0], f0)
    trace = [log_loss(y, score)]
    trees: list[Tree] = []
    if np.unique(y).size < 2:
        warnings.warn("single-class training labels; gradient boosting predicts a constant", stacklevel=2)
        n_stages = 0

    for _ in range(n_stages):
        p = expit(score)
        residual = y - p
        tree = fit_tree(X, residual, params=params, rng=rng)
        leaf_of_row = tree.apply(X)
        tree.value = _newton_leaves(tree, leaf_of_row, residual, p * (1 - p))
        step = learning_rate * tree.value[leaf_of_row]
        loss = log_loss(y, score + step)
        halvings = 0
        while loss > trace[-1] and halvings < 60:
            tree.value *= 0.5
            step *= 0.5
            loss = log_loss(y, score + step)
            halvings += 1
        if loss > trace[-1]:
            tree.value[:] = 0.0
            step[:] = 0.0
            loss = trace[-1]
        score = score + step
        trees.append(tree)
        trace.append(loss)
    return BoostedModel(f0, trees, learning_rate, X.shape[1], trace)
