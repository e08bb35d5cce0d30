"""ROC curves, AUC with confidence intervals, cross-validation and the comparison table."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from flowlens.dataset import LabeledDataset, stratified_kfold, substream
from flowlens.errors import ConfigError, EvaluationError, ShapeError
from flowlens.models import FittedModel, ModelSpec, fit_model, hard_predict

TABLE_COLUMNS = (
    "Model", "Train_Accuracy", "Val_Accuracy", "Test_Accuracy",
    "Train_AUC", "Train_AUC_CI", "Val_AUC", "Val_AUC_CI", "Test_AUC", "Test_AUC_CI",
)
CI_METHODS = ("hanley_mcneil", "bootstrap")


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(int).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise EvaluationError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise EvaluationError("AUC is undefined unless both classes are present")
    return s, y


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def rows(self):
        return zip(self.thresholds, self.fpr, self.tpr)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("threshold", "fpr", "tpr"))
            for t, f, p in self.rows():
                writer.writerow((repr(float(t)), repr(float(f)), repr(float(p))))


def trapezoid_area(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_curve(scores, labels) -> RocCurve:
    """Sweep every distinct score from high to low.

    The first point sits at threshold ``max(score) + 1`` with rates (0, 0).
    Tied scores move both rates in one step, which draws a diagonal segment.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s.size - 1]
    tp = np.cumsum(y_sorted)[last_of_run]
    fp = (last_of_run + 1) - tp
    n_pos, n_neg = tp[-1], fp[-1]
    thresholds = np.r_[s_sorted[0] + 1.0, s_sorted[last_of_run]]
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return RocCurve(thresholds, fpr, tpr, trapezoid_area(fpr, tpr))


def _midranks(values: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    return (upper - (counts - 1) / 2.0)[inverse]


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(positive outscores negative), ties count half."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    rank_sum = _midranks(s)[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class AucEstimate:
    value: float
    ci_low: float
    ci_high: float
    level: float = 0.95
    method: str = "hanley_mcneil"

    def render_ci(self) -> str:
        return f"[{self.ci_low:.3f}-{self.ci_high:.3f}]"


def hanley_mcneil_se(value: float, n_pos: int, n_neg: int) -> float:
    q1 = value / (2.0 - value)
    q2 = 2.0 * value * value / (1.0 + value)
    var = (value * (1 - value) + (n_pos - 1) * (q1 - value ** 2)
           + (n_neg - 1) * (q2 - value ** 2)) / (n_pos * n_neg)
    return float(np.sqrt(max(var, 0.0)))


def auc_ci(scores, labels, level: float = 0.95, method: str = "hanley_mcneil",
           seed: int = 0, n_boot: int = 2000) -> AucEstimate:
    """AUC with a two-sided interval, clipped to [0, 1].

    ``bootstrap`` resamples positives and negatives separately (keeping
    class counts fixed) and takes percentile bounds.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    s, y = _check_binary(scores, labels)
    value = auc(s, y)
    pos, neg = s[y == 1], s[y == 0]
    if method == "hanley_mcneil":
        z = NormalDist().inv_cdf(0.5 + level / 2.0)
        half = z * hanley_mcneil_se(value, pos.size, neg.size)
        low, high = value - half, value + half
    elif method == "bootstrap":
        rng = substream(seed, "ci.bootstrap")
        stats = np.empty(n_boot)
        yb = np.r_[np.ones(pos.size, dtype=int), np.zeros(neg.size, dtype=int)]
        for b in range(n_boot):
            sb = np.r_[pos[rng.integers(0, pos.size, pos.size)], neg[rng.integers(0, neg.size, neg.size)]]
            stats[b] = auc(sb, yb)
        alpha = (1.0 - level) / 2.0
        low, high = np.quantile(stats, [alpha, 1.0 - alpha])
        low, high = min(low, value), max(high, value)
    else:
        raise ConfigError(f"unknown CI method {method!r}; choose from {CI_METHODS}")
    return AucEstimate(value, float(np.clip(low, 0, 1)), float(np.clip(high, 0, 1)), level, method)


def accuracy(predicted, actual) -> float:
    p = np.asarray(predicted).ravel()
    a = np.asarray(actual).ravel()
    if p.shape != a.shape:
        raise ShapeError(f"length mismatch: {p.size} predictions, {a.size} labels")
    if p.size == 0:
        raise ShapeError("accuracy of an empty prediction set is undefined")
    return float(np.mean(p == a))


@dataclass(frozen=True)
class CVResult:
    fold_auc: np.ndarray
    fold_accuracy: np.ndarray
    fold_index: np.ndarray

    @property
    def mean_auc(self) -> float:
        return float(self.fold_auc.mean())

    @property
    def std_auc(self) -> float:
        return float(self.fold_auc.std())

    @property
    def mean_accuracy(self) -> float:
        return float(self.fold_accuracy.mean())


def cross_validate(spec: ModelSpec, data: LabeledDataset, k: int = 5, seed: int = 0) -> CVResult:
    """Stratified k-fold over every row of ``data``, ignoring split tags."""
    folds = stratified_kfold(data.labels, k, seed)
    aucs, accs = [], []
    for train_idx, test_idx in folds.folds():
        model = fit_model(spec, data.features[train_idx], data.labels[train_idx], seed)
        proba = model.predict_proba(data.features[test_idx])
        y = data.labels[test_idx]
        aucs.append(auc(proba, y))
        accs.append(accuracy(hard_predict(proba), y))
    return CVResult(np.array(aucs), np.array(accs), folds.fold_index)


def format_metric(value: float) -> str:
    """Six decimals with trailing zeros dropped: 1 -> "1", 0.9 -> "0.9"."""
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


@dataclass
class ComparisonTable:
    rows: list[dict] = field(default_factory=list)

    def add(self, model: str, accuracies: Mapping[str, float], aucs: Mapping[str, AucEstimate]) -> None:
        self.rows.append({"Model": model, "accuracy": dict(accuracies), "auc": dict(aucs)})

    def rendered(self) -> list[list[str]]:
        out = []
        for row in self.rows:
            acc, aucs = row["accuracy"], row["auc"]
            cells = [row["Model"]]
            cells += [format_metric(acc[s]) for s in ("train", "val", "test")]
            for s in ("train", "val", "test"):
                cells += [format_metric(aucs[s].value), aucs[s].render_ci()]
            out.append(cells)
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TABLE_COLUMNS)
            writer.writerows(self.rendered())

    def to_json(self, path: str | Path) -> None:
        records = [dict(zip(TABLE_COLUMNS, cells)) for cells in self.rendered()]
        Path(path).write_text(json.dumps(records, indent=2) + "\n")

    def __str__(self):
        rows = [list(TABLE_COLUMNS)] + self.rendered()
        widths = [max(len(r[i]) for r in rows) for i in range(len(TABLE_COLUMNS))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def read_comparison_csv(path: str | Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TABLE_COLUMNS:
        raise EvaluationError(f"{path}: header does not match {','.join(TABLE_COLUMNS)}")
    return rows[1:]


def evaluate_models(models: Mapping[str, FittedModel], data: LabeledDataset, ci: str = "hanley_mcneil",
                    seed: int = 0, level: float = 0.95) -> tuple[ComparisonTable, dict]:
    """Score fitted models on every split; returns the table and ROC curves keyed by (name, split)."""
    table = ComparisonTable()
    rocs = {}
    for name, model in models.items():
        accs, aucs = {}, {}
        for split in ("train", "val", "test"):
            X, y = data.subset(split)
            proba = model.predict_proba(X)
            accs[split] = accuracy(hard_predict(proba), y)
            aucs[split] = auc_ci(proba, y, level, ci, seed)
            rocs[(name, split)] = roc_curve(proba, y)
        table.add(name, accs, aucs)
    return table, rocs


def evaluate_all(specs: Sequence[ModelSpec], data: LabeledDataset, seed: int = 0,
                 ci: str = "hanley_mcneil") -> tuple[ComparisonTable, dict, dict]:
    """Fit each spec on the train split, then score all splits in spec order."""
    X, y = data.subset("train")
    models = {spec.name: fit_model(spec, X, y, seed) for spec in specs}
    table, rocs = evaluate_models(models, data, ci, seed)
    return table, rocs, models
