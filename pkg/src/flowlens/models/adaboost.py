"""AdaBoost over decision stumps chosen by minimum weighted error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowlens.errors import ConfigError, ShapeError
from flowlens.models.tree import Tree, check_features

ERROR_FLOOR = 1e-16  # keeps the learner weight finite when a stump is perfect


def learner_weight(error: float) -> float:
    """``0.5 * ln((1 - error) / error)``."""
    return 0.5 * np.log((1.0 - error) / max(error, ERROR_FLOOR))


@dataclass(eq=False)
class AdaBoostModel:
    stumps: list[Tree]  # leaf values are class labels in {0, 1}
    alphas: np.ndarray
    n_features: int
    errors: list[float] = field(default_factory=list)
    weight_sums: list[float] = field(default_factory=list)

    def margin(self, X) -> np.ndarray:
        """Normalized vote ``sum a_m h_m(x) / sum a_m`` in [-1, 1]."""
        X = check_features(X, self.n_features)
        if not self.stumps:
            return np.zeros(X.shape[0])
        # sequential accumulation: same summation order for any batch size
        acc = np.zeros(X.shape[0])
        for alpha, stump in zip(self.alphas, self.stumps):
            acc += alpha * (2.0 * stump.predict(X) - 1.0)
        return acc / self.alphas.sum()

    def predict_proba(self, X) -> np.ndarray:
        return np.clip((self.margin(X) + 1.0) / 2.0, 0.0, 1.0)


def _stump(feature, threshold, left_label, right_label, n_left, n_right, d) -> Tree:
    return Tree(
        feature=np.array([feature, -1, -1], dtype=np.int64),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int64),
        right=np.array([2, -1, -1], dtype=np.int64),
        value=np.array([0.0, left_label, right_label]),
        cover=np.array([n_left + n_right, n_left, n_right], dtype=float),
        n_features=d,
    )


def fit_stump(X, y, w, order=None) -> tuple[Tree, float]:
    """Stump minimizing the weighted 0-1 error; returns ``(stump, error)``.

    Ties go to the lowest feature index, then the lowest threshold, then
    the polarity that sends the lower side to class 0.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if order is None:
        order = np.argsort(X, axis=0, kind="mergesort")
    w1 = w * (y == 1)
    w0 = w * (y == 0)
    W1, W0 = w1.sum(), w0.sum()
    best = None
    for f in range(d):
        o = order[:, f]
        xs = X[o, f]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        c1 = np.cumsum(w1[o])[:-1]
        c0 = np.cumsum(w0[o])[:-1]
        err_a = c1 + (W0 - c0)  # left -> 0, right -> 1
        err_b = c0 + (W1 - c1)  # left -> 1, right -> 0
        err = np.where(valid, np.minimum(err_a, err_b), np.inf)
        j = int(np.argmin(err))
        if best is None or err[j] < best[0] - 1e-15:
            thr = xs[j] + (xs[j + 1] - xs[j]) / 2.0
            if not thr < xs[j + 1]:
                thr = xs[j]
            polarity_a = err_a[j] <= err_b[j]
            best = (float(err[j]), f, thr, polarity_a, j + 1)
    if best is None:
        label = float(W1 > W0)
        stump = _stump(0, np.finfo(float).max, label, label, n, 0, d)
        return stump, float(min(W0, W1) / (W0 + W1))
    err, f, thr, polarity_a, n_left = best
    left, right = (0.0, 1.0) if polarity_a else (1.0, 0.0)
    return _stump(f, thr, left, right, n_left, n - n_left, d), err / (W0 + W1)


def fit_adaboost(X, y, n_rounds: int = 50) -> AdaBoostModel:
    """Reweighting loop: misclassified rows gain ``exp(alpha)``, then weights renormalize.

    Stops early when a round's weighted error reaches 0.5 (round discarded)
    or hits 0 (round kept).
    """
    if n_rounds < 1:
        raise ConfigError(f"n_rounds must be >= 1, got {n_rounds}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"X shape {X.shape} incompatible with y shape {y.shape}")
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="mergesort")
    w = np.full(n, 1.0 / n)
    stumps, alphas, errors, sums = [], [], [], []
    for _ in range(n_rounds):
        stump, _ = fit_stump(X, y, w, order)
        miss = stump.predict(X) != y
        error = float(w[miss].sum())
        if error >= 0.5:
            break
        alpha = learner_weight(error)
        stumps.append(stump)
        alphas.append(alpha)
        errors.append(error)
        if error == 0.0:
            break
        w = w * np.exp(alpha * miss)
        w /= w.sum()
        sums.append(float(w.sum()))
    return AdaBoostModel(stumps, np.array(alphas), d, errors, sums)
