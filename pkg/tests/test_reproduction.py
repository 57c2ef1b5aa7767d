"""Desk-scale runs on the real MNIST files; skipped unless TTFED_MNIST_DIR points at them."""
import os

import pytest

from ttfed.config import Config
from ttfed.engine import ALGORITHMS, ScenarioConfig, Simulation, load_datasets
from ttfed.metrics import count_comm

MNIST_DIR = os.environ.get("TTFED_MNIST_DIR")

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not MNIST_DIR, reason="TTFED_MNIST_DIR not set"),
]

SEEDS = (1, 2, 3, 4, 5)


def _scenario(**overrides):
    files = {
        "data.train_images": "train-images-idx3-ubyte",
        "data.train_labels": "train-labels-idx1-ubyte",
        "data.test_images": "t10k-images-idx3-ubyte",
        "data.test_labels": "t10k-labels-idx1-ubyte",
    }
    settings = {k: os.path.join(MNIST_DIR, v) for k, v in files.items()}
    settings.update(overrides)
    return ScenarioConfig.from_settings(Config(overrides=settings).settings)


@pytest.fixture(scope="module")
def mnist():
    return load_datasets(_scenario())


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_iid_runs_reach_eighty_percent(mnist, algorithm, seed):
    cfg = _scenario(**{"sim.algorithm": algorithm, "sim.seed": seed, "sim.eval_every": 10})
    metrics = Simulation(cfg, *mnist).run()
    assert max(r.accuracy for r in metrics.records) >= 0.8


def test_message_ordering_at_common_target(mnist):
    agreeing = 0
    for seed in SEEDS:
        counts = {}
        for algorithm in ALGORITHMS:
            cfg = _scenario(**{"sim.algorithm": algorithm, "sim.seed": seed})
            counts[algorithm] = count_comm(Simulation(cfg, *mnist).run(), [0.7])[0.7]
        if None in counts.values():
            continue
        if counts["fedasync"] > counts["fedat"] > counts["ttfed"] >= counts["fedavg"]:
            agreeing += 1
    assert agreeing >= 4


def test_tiered_beats_async_baselines_on_non_iid_heterogeneous_users(mnist):
    non_iid = {"data.dirichlet_theta": 0.0, "data.zipf_eta": 0.0,
               "compute.cpu_freq_min_hz": 1e9, "compute.cpu_freq_max_hz": 5e9}
    final = {}
    for algorithm in ("ttfed", "fedasync", "fedat"):
        accuracies = []
        for seed in SEEDS:
            cfg = _scenario(**{"sim.algorithm": algorithm, "sim.seed": seed}, **non_iid)
            accuracies.append(Simulation(cfg, *mnist).run().final_accuracy())
        final[algorithm] = sum(accuracies) / len(accuracies)
    assert final["ttfed"] >= final["fedasync"]
    assert final["ttfed"] >= final["fedat"]
