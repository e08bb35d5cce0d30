import numpy as np
import pytest

from flowlens.dataset import SyntheticConfig, generate_flows, plan_windows, split_train_val_test
from flowlens.features import WindowConfig, featurize


def build_benchmark(difficulty="easy", seed=42, n=1300, rate=0.10, counts=(700, 300, 300)):
    """Seeded synthetic benchmark featurized and split like the CLI does it."""
    cfg = SyntheticConfig(n_flows=n, anomaly_rate=rate, difficulty=difficulty, seed=seed)
    flows = [rec for rec, _ in generate_flows(cfg)]
    intervals = [(p.start, p.end, p.label) for p in plan_windows(cfg)]
    data, _ = featurize(flows, WindowConfig(origin=0.0), intervals)
    return split_train_val_test(data, counts, seed)


@pytest.fixture(scope="session")
def easy_data():
    return build_benchmark("easy")


@pytest.fixture(scope="session")
def hard_data():
    return build_benchmark("hard")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
