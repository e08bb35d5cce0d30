"""Non-tree comparison models: logistic regression, linear SVM, Gaussian NB, KNN."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from flowlens.errors import ConfigError
from flowlens.models.tree import check_features


@dataclass(eq=False)
class ConstantModel:
    """Predicts the training positive rate for every row."""

    probability: float
    n_features: int

    def predict_proba(self, X) -> np.ndarray:
        X = check_features(X, self.n_features)
        return np.full(X.shape[0], self.probability)


@dataclass(eq=False)
class LinearModel:
    kind: str  # "logreg" or "svm"
    weights: np.ndarray
    bias: float
    n_iter: int = 0
    grad_norm: float = 0.0

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        # elementwise product + row sum keeps each row's score independent of the batch
        return (check_features(X, self.n_features) * self.weights).sum(axis=1) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        # for the SVM this squashes the margin for ranking only, it is not calibrated
        return expit(self.decision_function(X))


def _single_class(X, y, kind):
    warnings.warn(f"single-class training labels; {kind} degenerates to a constant model", stacklevel=3)
    bias = 20.0 if y[0] == 1 else -20.0
    return LinearModel(kind, np.zeros(X.shape[1]), bias)


def fit_logistic(X, y, l2: float = 1e-2, max_iter: int = 20000, tol: float = 1e-6) -> LinearModel:
    """Full-batch gradient descent on mean cross-entropy + ``l2/2 * |w|^2``.

    The step is ``1/L`` for the loss's Lipschitz gradient constant, which
    guarantees monotone descent; iteration stops once the gradient norm is
    at most ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(y).size < 2:
        return _single_class(X, y, "logreg")
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    lipschitz = np.linalg.norm(Xb, ord=2) ** 2 / (4 * n) + l2
    step = 1.0 / lipschitz
    theta = np.zeros(d + 1)
    reg = np.r_[np.full(d, l2), 0.0]
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = Xb.T @ (expit(Xb @ theta) - y) / n + reg * theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            break
        theta -= step * grad
    return LinearModel("logreg", theta[:-1].copy(), float(theta[-1]), it, grad_norm)


def fit_linear_svm(X, y, l2: float = 1e-2, max_iter: int = 2000) -> LinearModel:
    """Subgradient descent on mean hinge loss + ``l2/2 * |w|^2``.

    Uses the ``1/(l2 * t)`` step schedule and returns the average of the
    second half of the iterates.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(y).size < 2:
        return _single_class(X, y, "svm")
    n, d = X.shape
    s = 2.0 * y - 1.0
    w = np.zeros(d)
    b = 0.0
    avg_w = np.zeros(d)
    avg_b = 0.0
    n_avg = 0
    for t in range(1, max_iter + 1):
        active = s * (X @ w + b) < 1.0
        gw = l2 * w - (s[active, None] * X[active]).sum(axis=0) / n
        gb = -s[active].sum() / n
        eta = 1.0 / (l2 * (t + 1))
        w = w - eta * gw
        b = b - eta * gb
        if t > max_iter // 2:
            avg_w += w
            avg_b += b
            n_avg += 1
    return LinearModel("svm", avg_w / n_avg, float(avg_b / n_avg), max_iter)


@dataclass(eq=False)
class GaussianNB:
    means: np.ndarray  # (2, d)
    variances: np.ndarray  # (2, d), floored
    priors: np.ndarray  # (2,)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def predict_proba(self, X) -> np.ndarray:
        X = check_features(X, self.n_features)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        joint = np.stack([
            log_prior[c] - 0.5 * np.sum(np.log(2 * np.pi * self.variances[c])
                                        + (X - self.means[c]) ** 2 / self.variances[c], axis=1)
            for c in (0, 1)
        ], axis=1)
        return np.exp(joint[:, 1] - logsumexp(joint, axis=1))


def fit_gaussian_nb(X, y, var_smoothing: float = 1e-9) -> GaussianNB:
    """Per-class feature moments; variances get ``var_smoothing * max variance`` added."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    floor = max(var_smoothing * float(X.var(axis=0).max()), 1e-12)
    d = X.shape[1]
    means = np.zeros((2, d))
    variances = np.ones((2, d))
    priors = np.zeros(2)
    for c in (0, 1):
        rows = X[y == c]
        priors[c] = rows.shape[0] / X.shape[0]
        if rows.shape[0]:
            means[c] = rows.mean(axis=0)
            variances[c] = rows.var(axis=0)
    return GaussianNB(means, variances + floor, priors)


@dataclass(eq=False)
class KNNModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def predict_proba(self, X, chunk: int = 64) -> np.ndarray:
        """Inverse-distance weighted positive fraction among the ``k`` nearest rows.

        Exact matches (distance 0) take all of the vote. Distance ties keep
        the lower training index.
        """
        X = check_features(X, self.n_features)
        k = min(self.k, self.X.shape[0])
        out = np.empty(X.shape[0])
        for lo in range(0, X.shape[0], chunk):
            q = X[lo:lo + chunk]
            d2 = np.sum((q[:, None, :] - self.X[None, :, :]) ** 2, axis=2)
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            dist = np.sqrt(np.take_along_axis(d2, nn, axis=1))
            labels = self.y[nn]
            exact = dist == 0
            with np.errstate(divide="ignore"):
                weights = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dist)
            out[lo:lo + chunk] = np.sum(weights * labels, axis=1) / np.sum(weights, axis=1)
        return out


def fit_knn(X, y, k: int = 5) -> KNNModel:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return KNNModel(np.array(X, dtype=float), np.asarray(y).astype(float), k)
