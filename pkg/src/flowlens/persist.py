"""Versioned JSON model archives.

Floats are written with Python's shortest round-trip repr, so a reloaded
model scores bit-identically to the one that was saved.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from flowlens.dataset import Standardizer
from flowlens.errors import ArchiveError, VersionError
from flowlens.models import (
    AdaBoostModel, BoostedModel, ConstantModel, FittedModel, ForestModel, GaussianNB, KNNModel,
    LinearModel, ModelSpec, Tree, TreeParams,
)

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "n_features": tree.n_features,
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "leaf_value": tree.value.tolist(),
        "coverage": None if tree.cover is None else tree.cover.tolist(),
    }


def _tree_from_dict(d: dict) -> Tree:
    cover = d.get("coverage")
    tree = Tree(
        np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=float),
        np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
        np.array(d["leaf_value"], dtype=float), None if cover is None else np.array(cover, dtype=float),
        int(d["n_features"]),
    )
    n = tree.n_nodes
    arrays = [tree.threshold, tree.left, tree.right, tree.value] + ([] if tree.cover is None else [tree.cover])
    if n == 0 or any(a.shape != (n,) for a in arrays):
        raise ArchiveError("tree node arrays have inconsistent lengths")
    internal = tree.feature >= 0
    if np.any(tree.feature >= tree.n_features) or np.any(tree.left[internal] <= np.flatnonzero(internal)) \
            or np.any(tree.left[internal] >= n) or np.any(tree.right[internal] >= n) or np.any(tree.right[internal] <= 0):
        raise ArchiveError("tree node arrays do not describe a valid tree")
    return tree


def _encode(est) -> dict:
    if isinstance(est, Tree):
        return {"tree": _tree_to_dict(est)}
    if isinstance(est, ForestModel):
        p = est.params
        return {"bootstrap": est.bootstrap,
                "tree_params": {"max_depth": p.max_depth, "min_samples_split": p.min_samples_split,
                                "min_samples_leaf": p.min_samples_leaf,
                                "feature_subsample": p.feature_subsample, "criterion": p.criterion},
                "trees": [_tree_to_dict(t) for t in est.trees]}
    if isinstance(est, BoostedModel):
        return {"initial_score": est.initial_score, "learning_rate": est.learning_rate,
                "n_features": est.n_features, "loss_trace": list(est.loss_trace),
                "trees": [_tree_to_dict(t) for t in est.trees]}
    if isinstance(est, AdaBoostModel):
        return {"n_features": est.n_features, "alphas": est.alphas.tolist(), "errors": list(est.errors),
                "stumps": [_tree_to_dict(t) for t in est.stumps]}
    if isinstance(est, LinearModel):
        return {"weights": est.weights.tolist(), "bias": est.bias}
    if isinstance(est, GaussianNB):
        return {"means": est.means.tolist(), "variances": est.variances.tolist(), "priors": est.priors.tolist()}
    if isinstance(est, KNNModel):
        return {"k": est.k, "X": est.X.tolist(), "y": est.y.tolist()}
    if isinstance(est, ConstantModel):
        return {"probability": est.probability, "n_features": est.n_features}
    raise ArchiveError(f"cannot serialize {type(est).__name__}")


def _decode(kind: str, d: dict):
    if kind == "dt":
        return _tree_from_dict(d["tree"])
    if kind == "rf":
        return ForestModel([_tree_from_dict(t) for t in d["trees"]], TreeParams(**d["tree_params"]),
                           bool(d["bootstrap"]))
    if kind == "gb":
        return BoostedModel(float(d["initial_score"]), [_tree_from_dict(t) for t in d["trees"]],
                            float(d["learning_rate"]), int(d["n_features"]), list(d["loss_trace"]))
    if kind == "ada":
        return AdaBoostModel([_tree_from_dict(t) for t in d["stumps"]], np.array(d["alphas"], dtype=float),
                             int(d["n_features"]), list(d["errors"]))
    if kind in ("logreg", "svm"):
        return LinearModel(kind, np.array(d["weights"], dtype=float), float(d["bias"]))
    if kind == "nb":
        return GaussianNB(np.array(d["means"]), np.array(d["variances"]), np.array(d["priors"]))
    if kind == "knn":
        return KNNModel(np.array(d["X"], dtype=float), np.array(d["y"], dtype=float), int(d["k"]))
    if kind == "majority":
        return ConstantModel(float(d["probability"]), int(d["n_features"]))
    raise ArchiveError(f"unknown model_kind {kind!r}")


def model_to_dict(model: FittedModel, schema: Sequence[str]) -> dict:
    std = model.standardizer
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "hyperparameters": model.spec.resolved(),
        "feature_schema": list(schema),
        "standardizer": None if std is None else {"mean": std.mean.tolist(), "scale": std.scale.tolist()},
        "model": _encode(model.estimator),
    }


def save_model(model: FittedModel, path: str | Path, schema: Sequence[str]) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, schema), indent=1) + "\n")


def load_model(path: str | Path, expected_schema: Sequence[str] | None = None) -> tuple[FittedModel, tuple[str, ...]]:
    """Load an archive; returns the model and its feature-schema snapshot."""
    path = Path(path)
    if not path.is_file():
        raise ArchiveError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ArchiveError(f"{path}: corrupt model archive ({exc})") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ArchiveError(f"{path}: not a model archive (no format_version)")
    if doc["format_version"] not in SUPPORTED_VERSIONS:
        raise VersionError(f"{path}: format_version {doc['format_version']!r} unsupported; "
                           f"supported versions: {list(SUPPORTED_VERSIONS)}")
    try:
        kind = doc["model_kind"]
        schema = tuple(doc["feature_schema"])
        spec = ModelSpec(kind, {k: v for k, v in doc["hyperparameters"].items()})
        est = _decode(kind, doc["model"])
        std_doc = doc["standardizer"]
        std = None if std_doc is None else Standardizer(np.array(std_doc["mean"], dtype=float),
                                                        np.array(std_doc["scale"], dtype=float))
    except ArchiveError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"{path}: malformed model archive ({exc!r})") from None
    if expected_schema is not None and tuple(expected_schema) != schema:
        raise ArchiveError(f"{path}: feature schema snapshot does not match the expected "
                           f"{len(expected_schema)}-feature schema")
    return FittedModel(spec, est, std), schema
