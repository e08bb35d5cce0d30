"""Classifiers and a uniform fit/score interface keyed by short model kinds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from flowlens.dataset import Standardizer, fit_standardizer
from flowlens.errors import ConfigError
from flowlens.models.adaboost import AdaBoostModel, fit_adaboost
from flowlens.models.baselines import (
    ConstantModel, GaussianNB, KNNModel, LinearModel,
    fit_gaussian_nb, fit_knn, fit_linear_svm, fit_logistic,
)
from flowlens.models.boosting import BoostedModel, fit_gradient_boosting
from flowlens.models.forest import ForestModel, fit_random_forest
from flowlens.models.tree import Tree, TreeParams, fit_tree

DISPLAY_NAMES = {
    "dt": "Decision Tree",
    "rf": "Random Forest",
    "logreg": "Logistic Regression",
    "ada": "AdaBoost",
    "gb": "Gradient Boosting",
    "svm": "SVM",
    "nb": "Naive Bayes",
    "knn": "KNN",
    "majority": "Majority Class",
}
TABLE_KINDS = ("dt", "rf", "logreg", "ada", "gb", "svm", "nb", "knn")
TREE_KINDS = ("dt", "rf", "gb")
# scale-sensitive models see standardized features; trees see raw ones
SCALED_KINDS = ("logreg", "svm", "nb", "knn")

DEFAULTS: dict[str, dict[str, Any]] = {
    "dt": {"max_depth": None},
    "rf": {"n_trees": 100, "max_depth": None, "bootstrap": True, "n_jobs": 1},
    "gb": {"n_stages": 100, "learning_rate": 0.1, "max_depth": 3},
    "ada": {"n_rounds": 50},
    "logreg": {"l2": 1e-2, "max_iter": 20000},
    "svm": {"l2": 1e-2, "max_iter": 2000},
    "nb": {"var_smoothing": 1e-9},
    "knn": {"k": 5},
    "majority": {},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {sorted(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown hyperparameters {sorted(unknown)} for {self.kind}")

    @property
    def name(self) -> str:
        return DISPLAY_NAMES[self.kind]

    def resolved(self) -> dict[str, Any]:
        return {**DEFAULTS[self.kind], **self.params}


@dataclass(eq=False)
class FittedModel:
    """Estimator plus the standardizer applied in front of it (if any)."""

    spec: ModelSpec
    estimator: Any
    standardizer: Standardizer | None = None

    @property
    def kind(self) -> str:
        return self.spec.kind

    def _inputs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.standardizer.transform(X) if self.standardizer is not None else X

    def predict_proba(self, X) -> np.ndarray:
        return self.estimator.predict_proba(self._inputs(X))

    def raw_score(self, X) -> np.ndarray:
        """Additive-explanation target: mean leaf value (trees) or margin (boosting)."""
        if not hasattr(self.estimator, "raw_score"):
            raise TypeError(f"{self.kind} models have no tree raw score")
        return self.estimator.raw_score(self._inputs(X))

    def predict(self, X) -> np.ndarray:
        return hard_predict(self.predict_proba(X))


def hard_predict(proba) -> np.ndarray:
    """Label 1 iff probability exceeds 0.5; an exact 0.5 maps to 0."""
    return (np.asarray(proba) > 0.5).astype(int)


def fit_model(spec: ModelSpec, X, y, seed: int = 0) -> FittedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    p = spec.resolved()
    std = fit_standardizer(X) if spec.kind in SCALED_KINDS else None
    Z = std.transform(X) if std is not None else X
    kind = spec.kind
    if kind == "dt":
        est = fit_tree(Z, y, params=TreeParams(max_depth=p["max_depth"]), rng=seed)
    elif kind == "rf":
        est = fit_random_forest(Z, y, p["n_trees"], TreeParams(max_depth=p["max_depth"], feature_subsample="sqrt_d"),
                                seed=seed, bootstrap=p["bootstrap"], n_jobs=p["n_jobs"])
    elif kind == "gb":
        est = fit_gradient_boosting(Z, y, p["n_stages"], p["learning_rate"],
                                    TreeParams(max_depth=p["max_depth"], criterion="mse"), seed=seed)
    elif kind == "ada":
        est = fit_adaboost(Z, y, p["n_rounds"])
    elif kind == "logreg":
        est = fit_logistic(Z, y, p["l2"], p["max_iter"])
    elif kind == "svm":
        est = fit_linear_svm(Z, y, p["l2"], p["max_iter"])
    elif kind == "nb":
        est = fit_gaussian_nb(Z, y, p["var_smoothing"])
    elif kind == "knn":
        est = fit_knn(Z, y, p["k"])
    else:
        est = ConstantModel(float(y.mean()), X.shape[1])
    return FittedModel(spec, est, std)


__all__ = [
    "AdaBoostModel", "BoostedModel", "ConstantModel", "FittedModel", "ForestModel", "GaussianNB",
    "KNNModel", "LinearModel", "ModelSpec", "Tree", "TreeParams", "DISPLAY_NAMES", "TABLE_KINDS",
    "TREE_KINDS", "fit_adaboost", "fit_gaussian_nb", "fit_gradient_boosting", "fit_knn",
    "fit_linear_svm", "fit_logistic", "fit_model", "fit_random_forest", "fit_tree", "hard_predict",
]
