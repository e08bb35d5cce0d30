import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlens.errors import ConfigError, ShapeError
from flowlens.models import (
    AdaBoostModel, BoostedModel, FittedModel, ForestModel, ModelSpec, Tree, TreeParams, fit_adaboost,
    fit_gaussian_nb, fit_gradient_boosting, fit_knn, fit_linear_svm, fit_logistic, fit_model,
    fit_random_forest, fit_tree, hard_predict,
)
from flowlens.models.adaboost import _stump, learner_weight
from flowlens.models.boosting import log_loss
from flowlens.models.tree import gini


def _blobs(rng, n=200, d=4, shift=1.5):
    y = (rng.random(n) < 0.4).astype(int)
    X = rng.normal(size=(n, d)) + shift * y[:, None] * (np.arange(d) < 2)
    return X, y


def _leaf(value, d=1):
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([value]),
                np.array([1.0]), d)


# CART

def test_gini_hand_value():
    assert gini([3, 1]) == pytest.approx(0.375)


def test_xor_depth_two():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    tree = fit_tree(X, y, params=TreeParams(max_depth=2))
    assert np.array_equal(tree.predict(X), y)
    assert tree.max_depth == 2


def test_pure_node_is_single_leaf():
    tree = fit_tree(np.random.default_rng(0).normal(size=(10, 3)), np.ones(10))
    assert tree.n_nodes == 1
    assert tree.value[0] == 1.0


def test_tree_tie_break_lowest_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], dtype=float)
    tree = fit_tree(X, np.array([0, 0, 1, 1]))
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_tree_respects_depth_and_leaf_size(seed, depth):
    rng = np.random.default_rng(seed)
    X, y = _blobs(rng, n=80, d=3)
    tree = fit_tree(X, y, params=TreeParams(max_depth=depth, min_samples_leaf=3))
    assert tree.max_depth <= depth
    leaves = tree.feature < 0
    assert np.all(tree.cover[leaves] >= 3)
    # preorder: children come after their parent
    internal = np.flatnonzero(~leaves)
    assert np.all(tree.left[internal] == internal + 1)
    assert np.all(tree.right[internal] > tree.left[internal])


def test_unlimited_tree_fits_training_data(easy_data):
    X, y = easy_data.subset("train")
    tree = fit_tree(X, y)
    assert np.array_equal(tree.predict(X), y)


def test_tree_params_validation():
    with pytest.raises(ConfigError):
        TreeParams(max_depth=-1)
    with pytest.raises(ConfigError):
        TreeParams(feature_subsample="log2")


def test_tree_shape_check():
    tree = fit_tree(np.eye(3), np.array([0, 1, 0]))
    with pytest.raises(ShapeError):
        tree.predict(np.zeros((2, 4)))


# forest

def test_forest_degenerates_to_tree(rng):
    X, y = _blobs(rng)
    probe = rng.normal(size=(500, 4)) * 2
    params = TreeParams()
    forest = fit_random_forest(X, y, 1, params, seed=3, bootstrap=False)
    tree = fit_tree(X, y, params=params)
    assert np.array_equal(forest.predict_proba(probe), tree.predict(probe))


def test_forest_is_mean_of_leaves():
    forest = ForestModel([_leaf(1.0), _leaf(1.0), _leaf(0.0)])
    assert forest.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(2 / 3)


def test_forest_thread_count_invariant(rng):
    X, y = _blobs(rng)
    a = fit_random_forest(X, y, 12, seed=5, n_jobs=1)
    b = fit_random_forest(X, y, 12, seed=5, n_jobs=8)
    for ta, tb in zip(a.trees, b.trees):
        for field in ("feature", "threshold", "left", "right", "value", "cover"):
            assert np.array_equal(getattr(ta, field), getattr(tb, field))


def test_forest_seed_matters(rng):
    X, y = _blobs(rng)
    a = fit_random_forest(X, y, 5, seed=1).predict_proba(X)
    b = fit_random_forest(X, y, 5, seed=2).predict_proba(X)
    assert not np.array_equal(a, b)


def test_deep_forest_train_auc_one(easy_data):
    from flowlens.evaluation import auc
    X, y = easy_data.subset("train")
    model = fit_model(ModelSpec("rf"), X, y, seed=42)
    assert np.array_equal(model.predict(X), y)
    assert auc(model.predict_proba(X), y) == 1.0


# gradient boosting

def test_boosting_zero_stages_balanced():
    X = np.arange(10, dtype=float)[:, None]
    y = np.r_[np.zeros(5), np.ones(5)]
    model = fit_gradient_boosting(X, y, n_stages=0)
    assert model.initial_score == 0.0
    np.testing.assert_array_equal(model.predict_proba(X), 0.5)
    assert BoostedModel(0.0, [], 0.1, 1).predict_proba(np.zeros((3, 1))).tolist() == [0.5] * 3


@pytest.mark.parametrize("lr", [0.0, -0.1, 1.5])
def test_boosting_learning_rate_validation(lr):
    with pytest.raises(ConfigError):
        fit_gradient_boosting(np.zeros((4, 1)), np.array([0, 1, 0, 1]), learning_rate=lr)


def test_boosting_loss_monotone_easy(easy_data):
    X, y = easy_data.subset("train")
    model = fit_gradient_boosting(X, y, n_stages=50, learning_rate=0.1)
    trace = np.array(model.loss_trace)
    assert trace.size == 51
    assert np.all(np.diff(trace) <= 1e-12)
    assert log_loss(y, model.raw_score(X)) == pytest.approx(trace[-1], abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.1, 0.5, 1.0]))
def test_boosting_loss_monotone_property(seed, lr):
    rng = np.random.default_rng(seed)
    X, y = _blobs(rng, n=60, d=3, shift=0.5)
    trace = np.array(fit_gradient_boosting(X, y, n_stages=15, learning_rate=lr).loss_trace)
    assert np.all(np.diff(trace) <= 1e-12)


def test_boosting_single_class_warns():
    with pytest.warns(UserWarning):
        model = fit_gradient_boosting(np.zeros((4, 1)), np.ones(4))
    assert model.trees == []
    assert model.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(1 - 1e-6)


# AdaBoost

def test_learner_weight_hand_value():
    assert learner_weight(0.25) == pytest.approx(0.5 * np.log(3), abs=1e-12)
    assert learner_weight(0.25) == pytest.approx(0.54931, abs=1e-5)
    assert np.isfinite(learner_weight(0.0))


def test_single_stump_probability():
    stump = _stump(0, 0.5, 0.0, 1.0, 1, 1, 1)
    model = AdaBoostModel([stump], np.array([0.5493]), 1)
    assert model.predict_proba(np.array([[1.0]]))[0] == 1.0
    assert model.predict_proba(np.array([[0.0]]))[0] == 0.0


def test_adaboost_separable_stops():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    model = fit_adaboost(X, y, n_rounds=50)
    assert len(model.stumps) == 1
    assert model.errors == [0.0]
    assert np.array_equal(hard_predict(model.predict_proba(X)), y)


def test_adaboost_rounds_on_easy(easy_data):
    X, y = easy_data.subset("train")
    model = fit_adaboost(X, y, 50)
    assert len(model.errors) >= 1
    assert all(e < 0.5 for e in model.errors)
    assert all(abs(s - 1.0) <= 1e-12 for s in model.weight_sums)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_adaboost_invariants_property(seed):
    rng = np.random.default_rng(seed)
    X, y = _blobs(rng, n=80, d=3, shift=0.7)
    model = fit_adaboost(X, y, 20)
    assert all(e < 0.5 for e in model.errors)
    assert np.all(model.alphas > 0)
    assert all(abs(s - 1.0) <= 1e-12 for s in model.weight_sums)
    p = model.predict_proba(X)
    assert np.all((p >= 0) & (p <= 1))


# baselines

def test_logistic_separable_two_points():
    model = fit_logistic(np.array([[-1.0], [1.0]]), np.array([0, 1]))
    assert np.array_equal(hard_predict(model.predict_proba([[-1.0], [1.0]])), [0, 1])


def test_logistic_converges_on_toy(rng):
    X, y = _blobs(rng, n=100, d=3, shift=1.0)
    model = fit_logistic(X, y)
    assert model.grad_norm <= 1e-6


def test_svm_separates_blobs(rng):
    X, y = _blobs(rng, n=200, d=2, shift=4.0)
    model = fit_linear_svm(X, y)
    assert np.mean(hard_predict(model.predict_proba(X)) == y) > 0.95


def test_nb_boundary_at_zero():
    x = np.array([-1.0, -1.0, 1.0, 1.0, -2.0, 0.0, 0.0, 2.0])
    y = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    # per-class mean -1 / +1 with equal unit variances and priors
    model = fit_gaussian_nb(x[:, None], y)
    np.testing.assert_allclose(model.means[:, 0], [-1.0, 1.0])
    np.testing.assert_allclose(model.variances[0], model.variances[1])
    assert model.predict_proba(np.array([[0.0]]))[0] == pytest.approx(0.5, abs=1e-12)
    assert model.predict_proba(np.array([[0.1]]))[0] > 0.5 > model.predict_proba(np.array([[-0.1]]))[0]


def test_nb_variance_floor():
    model = fit_gaussian_nb(np.array([[1.0, 0.0], [1.0, 5.0], [1.0, 2.0]]), np.array([0, 1, 1]))
    assert np.all(model.variances > 0)
    assert np.all(np.isfinite(model.predict_proba(np.array([[1.0, 1.0]]))))


def test_knn_self_neighbor(rng):
    X, y = _blobs(rng, n=50)
    model = fit_knn(X, y, k=1)
    assert np.array_equal(model.predict_proba(X), y.astype(float))


def test_knn_distance_weighting():
    model = fit_knn(np.array([[0.0], [1.0], [3.0]]), np.array([1, 0, 0]), k=3)
    # weights 1/0.5, 1/0.5, 1/2.5
    assert model.predict_proba(np.array([[0.5]]))[0] == pytest.approx(2 / 4.4)


def test_knn_invalid_k():
    with pytest.raises(ConfigError):
        fit_knn(np.zeros((2, 1)), [0, 1], k=0)


# scoring plumbing

def test_hard_predict_rule():
    assert hard_predict([0.74])[0] == 1
    assert hard_predict([0.5])[0] == 0


@pytest.mark.parametrize("kind", ["dt", "rf", "gb", "ada", "logreg", "svm", "nb", "knn", "majority"])
def test_vectorized_equals_per_row(kind, rng):
    X, y = _blobs(rng, n=80)
    model = fit_model(ModelSpec(kind, {"n_trees": 10} if kind == "rf" else {}), X, y, seed=1)
    probe = rng.normal(size=(15, 4))
    batch = model.predict_proba(probe)
    single = np.array([model.predict_proba(row[None, :])[0] for row in probe])
    assert np.array_equal(batch, single)
    assert np.all((batch >= 0) & (batch <= 1))


def test_model_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec("xgboost")
    with pytest.raises(ConfigError):
        ModelSpec("rf", {"depth": 3})
    assert ModelSpec("rf").resolved()["n_trees"] == 100


def test_majority_model(easy_data):
    X, y = easy_data.subset("train")
    model = fit_model(ModelSpec("majority"), X, y)
    Xv, yv = easy_data.subset("val")
    assert np.mean(model.predict(Xv) == yv) == 0.9


def test_standardizer_only_for_scaled_kinds(rng):
    X, y = _blobs(rng)
    assert fit_model(ModelSpec("rf", {"n_trees": 2}), X, y).standardizer is None
    assert isinstance(fit_model(ModelSpec("knn"), X, y), FittedModel)
    assert fit_model(ModelSpec("knn"), X, y).standardizer is not None
