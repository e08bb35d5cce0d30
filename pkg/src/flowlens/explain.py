"""Exact Shapley attributions for tree models and the reports built on them.

Attributions use path-dependent expectations: a feature outside the
coalition is marginalized by sending the instance down both branches in
proportion to the training cover of each child. :func:`tree_shap` computes
them in polynomial time; :func:`brute_force_shapley` enumerates every
coalition and serves as the reference.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy.special import expit

from flowlens.errors import ExplanationError, SizeError
from flowlens.models import BoostedModel, FittedModel

MAX_BRUTE_FORCE_FEATURES = 15
DEFAULT_THRESHOLDS = (0.5,)


@dataclass(frozen=True, eq=False)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    model_output: float
    features: np.ndarray | None = None  # the explained row
    feature_names: tuple[str, ...] | None = None

    def to_dict(self) -> dict:
        names = self.feature_names or tuple(f"x{i}" for i in range(self.phi.size))
        return {
            "base_value": float(self.base_value),
            "model_output": float(self.model_output),
            "phi": {n: float(v) for n, v in zip(names, self.phi)},
        }


def _estimator(model):
    est = model.estimator if isinstance(model, FittedModel) else model
    if isinstance(model, FittedModel) and model.standardizer is not None:
        raise ExplanationError(f"{model.kind} models are not tree ensembles and cannot be explained")
    if not hasattr(est, "tree_terms"):
        raise ExplanationError(f"{type(est).__name__} is not a tree model")
    offset, terms = est.tree_terms()
    for tree, _ in terms:
        if tree.cover is None:
            raise ExplanationError("model lacks per-node cover metadata needed for explanations")
    return est, offset, terms


@numba.njit(cache=True)
def _extend(feat, zero, one, pw, off, depth, zero_frac, one_frac, f):
    feat[off + depth] = f
    zero[off + depth] = zero_frac
    one[off + depth] = one_frac
    pw[off + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[off + i + 1] += one_frac * pw[off + i] * (i + 1) / (depth + 1)
        pw[off + i] = zero_frac * pw[off + i] * (depth - i) / (depth + 1)


@numba.njit(cache=True)
def _unwind(feat, zero, one, pw, off, depth, k):
    one_frac = one[off + k]
    zero_frac = zero[off + k]
    nxt = pw[off + depth]
    for i in range(depth - 1, -1, -1):
        if one_frac != 0.0:
            tmp = pw[off + i]
            pw[off + i] = nxt * (depth + 1) / ((i + 1) * one_frac)
            nxt = tmp - pw[off + i] * zero_frac * (depth - i) / (depth + 1)
        else:
            pw[off + i] = pw[off + i] * (depth + 1) / (zero_frac * (depth - i))
    for i in range(k, depth):
        feat[off + i] = feat[off + i + 1]
        zero[off + i] = zero[off + i + 1]
        one[off + i] = one[off + i + 1]


@numba.njit(cache=True)
def _unwound_sum(zero, one, pw, off, depth, k):
    one_frac = one[off + k]
    zero_frac = zero[off + k]
    nxt = pw[off + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one_frac != 0.0:
            tmp = nxt * (depth + 1) / ((i + 1) * one_frac)
            total += tmp
            nxt = pw[off + i] - tmp * zero_frac * (depth - i) / (depth + 1)
        else:
            total += pw[off + i] / (zero_frac * (depth - i) / (depth + 1))
    return total


# recursive kernels must not use numba's on-disk cache (reloaded recursion segfaults)
@numba.njit
def _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             feat, zero, one, pw, parent_off, node, depth, zero_frac, one_frac, parent_feature):
    off = parent_off + depth + 1
    for i in range(depth + 1):
        feat[off + i] = feat[parent_off + i]
        zero[off + i] = zero[parent_off + i]
        one[off + i] = one[parent_off + i]
        pw[off + i] = pw[parent_off + i]
    _extend(feat, zero, one, pw, off, depth, zero_frac, one_frac, parent_feature)

    f = feature[node]
    if f < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(zero, one, pw, off, depth, i)
            phi[feat[off + i]] += w * (one[off + i] - zero[off + i]) * value[node] * scale
        return

    if x[f] <= threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    hot_zero = cover[hot] / cover[node]
    cold_zero = cover[cold] / cover[node]
    in_zero = 1.0
    in_one = 1.0
    k = depth + 1
    for i in range(depth + 1):
        if feat[off + i] == f:
            k = i
            break
    if k != depth + 1:
        # the feature was split on higher up: undo that path element first
        in_zero = zero[off + k]
        in_one = one[off + k]
        _unwind(feat, zero, one, pw, off, depth, k)
        depth -= 1
    _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             feat, zero, one, pw, off, hot, depth + 1, hot_zero * in_zero, in_one, f)
    _recurse(x, feature, threshold, left, right, value, cover, phi, scale,
             feat, zero, one, pw, off, cold, depth + 1, cold_zero * in_zero, 0.0, f)


@numba.njit
def _tree_shap_rows(X, feature, threshold, left, right, value, cover, scale, max_depth, phi):
    size = (max_depth + 3) * (max_depth + 4)
    feat = np.full(size, -1, dtype=np.int64)
    zero = np.zeros(size)
    one = np.zeros(size)
    pw = np.zeros(size)
    for r in range(X.shape[0]):
        _recurse(X[r], feature, threshold, left, right, value, cover, phi[r], scale,
                 feat, zero, one, pw, 0, 0, 0, 1.0, 1.0, -1)


def _as_rows(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise ExplanationError(f"expected rows with {d} features, got shape {X.shape}")
    return np.ascontiguousarray(X)


def _pack(est, X, base, phi, feature_names):
    outputs = est.raw_score(X)
    names = tuple(feature_names) if feature_names is not None else None
    return [ShapExplanation(base, phi[i], float(outputs[i]), X[i].copy(), names) for i in range(X.shape[0])]


def tree_shap_values(model, X) -> tuple[float, np.ndarray, np.ndarray]:
    """Vectorized core: ``(base_value, phi (n, d), raw outputs (n,))``."""
    est, offset, terms = _estimator(model)
    X = _as_rows(X, est.n_features)
    phi = np.zeros(X.shape)
    base = float(offset)
    for tree, scale in terms:
        base += scale * tree.expected_value()
        _tree_shap_rows(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value,
                        tree.cover.astype(float), float(scale), tree.max_depth, phi)
    return base, phi, est.raw_score(X)


def tree_shap(model, X, feature_names: Sequence[str] | None = None):
    """Explain one row (returns a :class:`ShapExplanation`) or many (returns a list).

    The explained output is the raw score: mean leaf value for forests and
    single trees, the pre-logistic margin for boosted models.
    """
    single = np.asarray(X).ndim == 1
    est, _, _ = _estimator(model)
    X = _as_rows(X, est.n_features)
    base, phi, _ = tree_shap_values(model, X)
    out = _pack(est, X, base, phi, feature_names)
    return out[0] if single else out


def _coalition_values(terms, offset, X, d) -> np.ndarray:
    """v(S) for every row and coalition bitmask S, shape ``(n, 2**d)``."""
    masks = np.arange(2 ** d)
    member = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    values = np.full((X.shape[0], masks.size), float(offset))

    def walk(tree, node, prob, acc):
        f = tree.feature[node]
        if f < 0:
            acc += prob * tree.value[node]
            return
        goes_left = (X[:, f] <= tree.threshold[node])[:, None]
        known = member[:, f][None, :]
        for child, follows in ((tree.left[node], goes_left), (tree.right[node], ~goes_left)):
            share = tree.cover[child] / tree.cover[node]
            walk(tree, child, prob * np.where(known, follows, share), acc)

    for tree, scale in terms:
        acc = np.zeros_like(values)
        walk(tree, 0, np.ones_like(values), acc)
        values += scale * acc
    return values


def brute_force_shapley(model, X, feature_names: Sequence[str] | None = None):
    """Shapley values by enumerating all ``2**d`` coalitions (``d <= 15``)."""
    single = np.asarray(X).ndim == 1
    est, offset, terms = _estimator(model)
    d = est.n_features
    if d > MAX_BRUTE_FORCE_FEATURES:
        raise SizeError(f"brute-force Shapley needs d <= {MAX_BRUTE_FORCE_FEATURES}, got {d}")
    X = _as_rows(X, d)
    v = _coalition_values(terms, offset, X, d)
    masks = np.arange(2 ** d)
    size = np.array([bin(m).count("1") for m in masks])
    weight = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                       if s < d else 0.0 for s in size])
    phi = np.zeros(X.shape)
    for j in range(d):
        without = masks[(masks >> j) & 1 == 0]
        phi[:, j] = (v[:, without | (1 << j)] - v[:, without]) @ weight[without]
    out = [ShapExplanation(float(v[i, 0]), phi[i], float(v[i, -1]), X[i].copy(),
                           tuple(feature_names) if feature_names is not None else None)
           for i in range(X.shape[0])]
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class GlobalImportance:
    feature_names: tuple[str, ...]
    mean_abs: np.ndarray
    ranking: tuple[int, ...]  # feature indices, most important first

    def top(self, k: int = 3) -> list[str]:
        return [f"{self.feature_names[i]} {self.mean_abs[i]:.3f}" for i in self.ranking[:k]]

    def to_csv(self, path: str | Path) -> None:
        rank_of = {f: r for r, f in enumerate(self.ranking, start=1)}
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("feature", "mean_abs_shap", "rank"))
            for i in self.ranking:
                writer.writerow((self.feature_names[i], repr(float(self.mean_abs[i])), rank_of[i]))


def _phi_matrix(explanations) -> np.ndarray:
    if len(explanations) == 0:
        raise SizeError("no explanations given")
    dims = {e.phi.size for e in explanations}
    if len(dims) != 1:
        raise SizeError(f"explanations have mixed dimensionality {sorted(dims)}")
    return np.array([e.phi for e in explanations])


def global_importance(explanations: Sequence[ShapExplanation],
                      feature_names: Sequence[str] | None = None) -> GlobalImportance:
    """Mean |phi| per feature; ranking descends, ties keep schema order."""
    phi = _phi_matrix(explanations)
    names = tuple(feature_names or explanations[0].feature_names
                  or [f"x{i}" for i in range(phi.shape[1])])
    mean_abs = np.abs(phi).mean(axis=0)
    ranking = tuple(int(i) for i in np.argsort(-mean_abs, kind="stable"))
    return GlobalImportance(names, mean_abs, ranking)


@dataclass(frozen=True, eq=False)
class DependenceSeries:
    feature: str
    color_feature: str
    feature_value: np.ndarray
    phi: np.ndarray
    color_value: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("feature_value", "phi", "color_value"))
            for row in zip(self.feature_value, self.phi, self.color_value):
                writer.writerow(tuple(repr(float(v)) for v in row))


def _lookup(name: str, names: Sequence[str]) -> int:
    try:
        return list(names).index(name)
    except ValueError:
        raise KeyError(f"unknown feature {name!r}; valid names: {', '.join(names)}") from None


def pick_color_feature(X: np.ndarray, phi_j: np.ndarray, j: int) -> int:
    """Feature most correlated (in |Pearson r|) with what x_j alone leaves unexplained in phi_j.

    The residual is phi_j minus its least-squares line in x_j. Ties and
    undefined correlations resolve to the lowest feature index.
    """
    xj = X[:, j]
    if np.ptp(xj) > 0:
        slope, intercept = np.polyfit(xj, phi_j, 1)
        resid = phi_j - (slope * xj + intercept)
    else:
        resid = phi_j - phi_j.mean()
    scores = np.zeros(X.shape[1])
    for k in range(X.shape[1]):
        if k == j or np.ptp(X[:, k]) == 0 or np.ptp(resid) == 0:
            continue
        r = np.corrcoef(X[:, k], resid)[0, 1]
        scores[k] = abs(r) if np.isfinite(r) else 0.0
    scores[j] = -1.0
    return int(np.argmax(scores))


def dependence_data(explanations: Sequence[ShapExplanation], feature: str, color_feature: str | None = None,
                    feature_names: Sequence[str] | None = None) -> DependenceSeries:
    names = tuple(feature_names or explanations[0].feature_names)
    j = _lookup(feature, names)
    phi = _phi_matrix(explanations)
    X = np.array([e.features for e in explanations])
    c = _lookup(color_feature, names) if color_feature else pick_color_feature(X, phi[:, j], j)
    return DependenceSeries(names[j], names[c], X[:, j], phi[:, j], X[:, c])


@dataclass(frozen=True)
class WaterfallDecomposition:
    base: float
    steps: tuple[tuple[str, float], ...]
    final: float
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    link: str = "identity"  # "logit" when base/final are margins

    def to_dict(self) -> dict:
        out = {
            "base": self.base,
            "final": self.final,
            "link": self.link,
            "steps": [{"feature": f, "contribution": v} for f, v in self.steps],
            "thresholds": list(self.thresholds),
        }
        if self.link == "logit":
            out["base_probability"] = float(expit(self.base))
            out["final_probability"] = float(expit(self.final))
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def waterfall(explanation: ShapExplanation, thresholds: Sequence[float] = (), link: str = "identity",
              feature_names: Sequence[str] | None = None, min_abs: float = 1e-12) -> WaterfallDecomposition:
    """Order contributions by |phi| (ties in schema order) from base to final output.

    Contributions under ``min_abs`` are dropped; ``final`` is the exact sum
    of base and the remaining steps.
    """
    names = tuple(feature_names or explanation.feature_names
                  or [f"x{i}" for i in range(explanation.phi.size)])
    phi = explanation.phi
    order = np.argsort(-np.abs(phi), kind="stable")
    steps = tuple((names[i], float(phi[i])) for i in order if abs(phi[i]) >= min_abs)
    final = float(explanation.base_value) + math.fsum(v for _, v in steps)
    extra = tuple(float(t) for t in thresholds if float(t) not in DEFAULT_THRESHOLDS)
    return WaterfallDecomposition(float(explanation.base_value), steps, final, DEFAULT_THRESHOLDS + extra, link)


def link_for(model) -> str:
    est = model.estimator if isinstance(model, FittedModel) else model
    return "logit" if isinstance(est, BoostedModel) else "identity"
