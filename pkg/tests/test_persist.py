import json

import numpy as np
import pytest

from flowlens.errors import ArchiveError, VersionError
from flowlens.features import FEATURE_NAMES
from flowlens.models import ModelSpec, fit_model
from flowlens.persist import FORMAT_VERSION, load_model, save_model

KINDS = ["dt", "rf", "gb", "ada", "logreg", "svm", "nb", "knn", "majority"]


@pytest.fixture(scope="module")
def train_xy():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(150, len(FEATURE_NAMES))) * rng.uniform(0.1, 100, len(FEATURE_NAMES))
    y = (X[:, 0] + X[:, 3] * 0.05 + rng.normal(0, 5, 150) > 0).astype(int)
    return X, y


@pytest.mark.parametrize("kind", KINDS)
def test_round_trip_bit_exact(kind, train_xy, tmp_path):
    X, y = train_xy
    params = {"n_trees": 15} if kind == "rf" else {"n_stages": 20} if kind == "gb" else {}
    model = fit_model(ModelSpec(kind, params), X, y, seed=3)
    path = tmp_path / f"{kind}.json"
    save_model(model, path, FEATURE_NAMES)
    loaded, schema = load_model(path, FEATURE_NAMES)
    assert schema == FEATURE_NAMES
    assert loaded.kind == model.kind
    assert loaded.spec.resolved() == model.spec.resolved()
    probe = np.random.default_rng(1).normal(size=(1000, len(FEATURE_NAMES))) * 50
    assert np.array_equal(loaded.predict_proba(probe), model.predict_proba(probe))


def test_archive_fields(train_xy, tmp_path):
    X, y = train_xy
    save_model(fit_model(ModelSpec("dt", {"max_depth": 3}), X, y), tmp_path / "m.json", FEATURE_NAMES)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["format_version"] == FORMAT_VERSION
    assert doc["model_kind"] == "dt"
    assert doc["hyperparameters"]["max_depth"] == 3
    assert doc["feature_schema"] == list(FEATURE_NAMES)
    assert set(doc["model"]["tree"]) >= {"feature", "threshold", "left", "right", "leaf_value", "coverage"}


def test_truncated_file(train_xy, tmp_path):
    X, y = train_xy
    path = tmp_path / "m.json"
    save_model(fit_model(ModelSpec("rf", {"n_trees": 3}), X, y), path, FEATURE_NAMES)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ArchiveError):
        load_model(path)


def test_version_error_names_supported(train_xy, tmp_path):
    X, y = train_xy
    path = tmp_path / "m.json"
    save_model(fit_model(ModelSpec("nb"), X, y), path, FEATURE_NAMES)
    doc = json.loads(path.read_text())
    doc["format_version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(VersionError, match=r"999.*\[1\]"):
        load_model(path)


def test_missing_and_malformed(tmp_path):
    with pytest.raises(ArchiveError, match="nope.json"):
        load_model(tmp_path / "nope.json")
    (tmp_path / "a.json").write_text('{"format_version": 1, "model_kind": "dt"}')
    with pytest.raises(ArchiveError):
        load_model(tmp_path / "a.json")
    (tmp_path / "b.json").write_text("[1, 2]")
    with pytest.raises(ArchiveError):
        load_model(tmp_path / "b.json")


def test_corrupt_tree_arrays(train_xy, tmp_path):
    X, y = train_xy
    path = tmp_path / "m.json"
    save_model(fit_model(ModelSpec("dt", {"max_depth": 2}), X, y), path, FEATURE_NAMES)
    doc = json.loads(path.read_text())
    doc["model"]["tree"]["left"][0] = 10**6
    path.write_text(json.dumps(doc))
    with pytest.raises(ArchiveError):
        load_model(path)


def test_schema_mismatch(train_xy, tmp_path):
    X, y = train_xy
    path = tmp_path / "m.json"
    save_model(fit_model(ModelSpec("majority"), X, y), path, FEATURE_NAMES)
    with pytest.raises(ArchiveError, match="schema"):
        load_model(path, FEATURE_NAMES[::-1])
