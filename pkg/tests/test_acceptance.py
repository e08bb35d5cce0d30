"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines, or execute this
file directly for a compact summary.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import build_benchmark  # noqa: E402
from oracles import probe_rows, random_tree_model  # noqa: E402

from flowlens.cli import run  # noqa: E402
from flowlens.evaluation import TABLE_COLUMNS, auc, auc_ci, evaluate_all, format_metric, roc_curve  # noqa: E402
from flowlens.explain import brute_force_shapley, global_importance, tree_shap, tree_shap_values  # noqa: E402
from flowlens.features import FEATURE_NAMES  # noqa: E402
from flowlens.models import (  # noqa: E402
    ModelSpec, TreeParams, fit_adaboost, fit_gradient_boosting, fit_model, fit_random_forest, fit_tree,
)
from flowlens.spectral import BandEnergyProfile, band_energies, haar_dwt, spectral_entropy  # noqa: E402


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
    assert ok, detail


@pytest.fixture(scope="module", autouse=True)
def warm_jit():
    """Compile the numba kernels once so timed sections measure steady-state work."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(int)
    tree_shap(fit_tree(X, y), X[:2])


@pytest.fixture(scope="module")
def easy():
    return build_benchmark("easy", seed=42)


def pair_count_auc(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0) + 0.5 * (diff == 0)).mean())


def test_c1_shap_additivity(easy):
    t0 = time.perf_counter()
    X, y = easy.subset("train")
    rng = np.random.default_rng(1)
    idx = rng.integers(0, len(easy), 200)
    probes = easy.features[idx] * rng.uniform(0.8, 1.2, size=(200, len(FEATURE_NAMES)))
    worst = {}
    for kind in ("dt", "rf", "gb"):
        model = fit_model(ModelSpec(kind), X, y, seed=42)
        base, phi, out = tree_shap_values(model, probes)
        worst[kind] = float(np.max(np.abs(base + phi.sum(axis=1) - out)))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-9 and elapsed < 10
    verdict(1, "SHAP additivity", ok,
            f"max |base+sum(phi)-raw| {', '.join(f'{k}={v:.1e}' for k, v in worst.items())}; {elapsed:.2f}s (<10s)")


def test_c2_shapley_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    kinds = ("dt", "rf", "gb")
    for m in range(50):
        kind = kinds[m % 3]
        d = int(rng.integers(1, 11))
        depth = int(rng.integers(1, 5))
        n_trees = 1 if kind == "dt" else int(rng.integers(1, 21))
        model, X = random_tree_model(rng, kind, d, depth, n_trees)
        P = probe_rows(rng, X, 50)
        _, phi, _ = tree_shap_values(model, P)
        ref = np.array([e.phi for e in brute_force_shapley(model, P)])
        worst = max(worst, float(np.max(np.abs(phi - ref))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    verdict(2, "Tree SHAP equals brute-force Shapley", ok,
            f"50 models x 50 rows, max abs diff {worst:.1e} (<=1e-9); {elapsed:.2f}s (<60s)")


def test_c3_auc_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = rng.normal(size=n)
        dup = rng.random(n) < 0.3  # inject ties
        scores[dup] = rng.choice(scores, dup.sum())
        scores = np.round(scores, int(rng.integers(0, 3)))
        ref = pair_count_auc(scores, labels)
        worst = max(worst, abs(roc_curve(scores, labels).auc - ref), abs(auc(scores, labels) - ref))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    verdict(3, "ROC trapezoid area equals Mann-Whitney pair count", ok,
            f"100 sets, max diff {worst:.1e} (<=1e-12); {elapsed:.2f}s (<5s)")


def test_c4_degenerate_ci():
    est = auc_ci(np.array([0.9, 0.8, 0.7, 0.3, 0.2, 0.1]), np.array([1, 1, 1, 0, 0, 0]), method="hanley_mcneil")
    rendered = est.render_ci()
    ok = est.value == 1.0 and rendered == "[1.000-1.000]" and format_metric(est.value) == "1"
    verdict(4, "degenerate Hanley-McNeil CI rendering", ok, f"AUC {format_metric(est.value)}, CI {rendered}")


def test_c5_dwt_energy_and_entropy():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        levels = int(rng.integers(1, 7))
        n = 2 ** levels * int(rng.integers(1, 33))  # even, and no level needs padding
        x = rng.normal(0, rng.uniform(0.01, 1e3), n)
        total = float(np.dot(x, x))
        worst = max(worst, abs(total - band_energies(haar_dwt(x, levels)).total) / total)
    bounds_ok = True
    for _ in range(1000):
        e = rng.random(int(rng.integers(1, 9))) * (rng.random() < 0.9)
        h = spectral_entropy(BandEnergyProfile(e, float(e.sum())))
        bounds_ok &= 0.0 <= h <= math.log2(e.size) + 1e-12
    uniform = spectral_entropy(BandEnergyProfile(np.full(4, 2.5), 10.0))
    degenerate = spectral_entropy(BandEnergyProfile(np.array([0.0, 7.0, 0.0, 0.0]), 7.0))
    ok = worst <= 1e-9 and bounds_ok and abs(uniform - 2.0) <= 1e-12 and degenerate == 0.0
    verdict(5, "DWT energy conservation and entropy bounds", ok,
            f"max relative energy error {worst:.1e} (<=1e-9); entropy uniform(4)={uniform}, degenerate={degenerate}")


def test_c6_ensemble_degeneracy():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(300, 6))
    y = ((X[:, 0] * X[:, 1] + X[:, 2]) > 0).astype(int)
    probe = rng.normal(size=(500, 6)) * 1.5
    forest = fit_random_forest(X, y, n_trees=1, params=TreeParams(feature_subsample="all"), seed=11, bootstrap=False)
    tree = fit_tree(X, y, params=TreeParams(feature_subsample="all"))
    same = np.array_equal(forest.predict_proba(probe), tree.predict(probe))
    verdict(6, "single-tree forest equals CART", same, "500 probe rows bit-exact" if same else "predictions differ")


@pytest.fixture(scope="module")
def hard():
    return build_benchmark("hard", seed=42)


def test_c7_boosting_monotonicity(easy, hard):
    # easy data is separated by one stump, so the hard preset exercises the reweighting
    parts, ok = [], True
    for name, data in (("easy", easy), ("hard", hard)):
        X, y = data.subset("train")
        gb = fit_gradient_boosting(X, y, n_stages=100, learning_rate=0.1)
        worst_rise = float(np.max(np.diff(gb.loss_trace)))
        ada = fit_adaboost(X, y, 50)
        max_err = max(ada.errors)
        sum_dev = max((abs(s - 1.0) for s in ada.weight_sums), default=0.0)
        ok &= worst_rise <= 1e-12 and max_err < 0.5 and sum_dev <= 1e-12
        parts.append(f"{name}: GB max stage loss change {worst_rise:.2e}, AdaBoost {len(ada.errors)} rounds "
                     f"max eps {max_err:.4f}, max |sum w - 1| {sum_dev:.1e}")
    verdict(7, "boosting monotonicity", ok, "; ".join(parts))


def test_c8_synthetic_benchmark():
    t0 = time.perf_counter()
    easy = build_benchmark("easy", seed=42)
    sizes = [int(easy.mask(s).sum()) for s in ("train", "val", "test")]
    table, _, _ = evaluate_all([ModelSpec("rf"), ModelSpec("majority")], easy, seed=42)
    rows = {r[0]: dict(zip(TABLE_COLUMNS, r)) for r in table.rendered()}
    rf, maj = rows["Random Forest"], rows["Majority Class"]

    hard = build_benchmark("hard", seed=42)  # rebuilt so the timing covers generation
    Xh, yh = hard.subset("train")
    model = fit_model(ModelSpec("rf"), Xh, yh, seed=42)
    hard_train = auc(model.predict_proba(Xh), yh)
    Xv, yv = hard.subset("val")
    hard_val = auc(model.predict_proba(Xv), yv)
    elapsed = time.perf_counter() - t0

    ok = (sizes == [700, 300, 300] and rf["Train_AUC"] in ("1", "1.000000") and rf["Train_AUC_CI"] == "[1.000-1.000]"
          and float(rf["Val_AUC"]) >= 0.80 and maj["Val_Accuracy"] == "0.9"
          and hard_train - hard_val >= 0.15 and elapsed < 60)
    verdict(8, "synthetic benchmark", ok,
            f"splits {sizes}; easy RF Train_AUC {rf['Train_AUC']} {rf['Train_AUC_CI']}, Val_AUC {rf['Val_AUC']} (>=0.80); "
            f"majority Val_Accuracy {maj['Val_Accuracy']}; hard RF train {hard_train:.3f} vs val {hard_val:.3f}, "
            f"gap {hard_train - hard_val:.3f} (>=0.15); {elapsed:.1f}s (<60s)")


def test_c9_explainability_ranking(easy):
    X, y = easy.subset("train")
    model = fit_model(ModelSpec("rf"), X, y, seed=42)
    Xv, _ = easy.subset("val")
    imp = global_importance(tree_shap(model, Xv, FEATURE_NAMES))
    top = imp.feature_names[imp.ranking[0]]
    verdict(9, "packet_count_5s ranks first", top == "packet_count_5s" and Xv.shape[0] == 300,
            f"{Xv.shape[0]} val rows, top-3: {'; '.join(imp.top(3))}")


def test_c10_report_conformance(tmp_path, monkeypatch):
    monkeypatch.delenv("FLOWLENS_SEED", raising=False)
    codes = [run(["all", "--seed", "42", "--out-dir", str(tmp_path / name)]) for name in ("a", "b")]
    report = tmp_path / "a" / "report"
    header = (report / "comparison.csv").read_text().splitlines()[0]
    waterfalls = sorted(report.glob("waterfall_*.json"))
    has_median = bool(waterfalls) and all(0.5 in json.loads(p.read_text())["thresholds"] for p in waterfalls)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    mismatched = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    ok = (codes == [0, 0] and header == ",".join(TABLE_COLUMNS)
          and header == "Model,Train_Accuracy,Val_Accuracy,Test_Accuracy,Train_AUC,Train_AUC_CI,"
                        "Val_AUC,Val_AUC_CI,Test_AUC,Test_AUC_CI"
          and has_median and not mismatched)
    verdict(10, "report conformance", ok,
            f"exit codes {codes}; header ok={header == ','.join(TABLE_COLUMNS)}; {len(waterfalls)} waterfalls with 0.5; "
            f"{len(files)} files, {len(mismatched)} differ between runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
