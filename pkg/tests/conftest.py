import json
import os

import numpy as np
import pytest

from ttfed.datagen import synthetic_split
from ttfed.engine import ScenarioConfig, Simulation
from ttfed.idx import dump_images, dump_labels


@pytest.fixture(scope="session")
def tiny_data():
    """Six-dimensional synthetic clusters: 200 train, 100 test samples."""
    return synthetic_split(200, 100, seed=3, dim=6, noise=0.2)


@pytest.fixture
def scenario():
    def make(**kw):
        settings = dict(num_users=5, rounds=20, hidden_width=4, batch_size=16, data_source="synthetic")
        settings.update(kw)
        return ScenarioConfig(**settings)
    return make


@pytest.fixture
def simulate(tiny_data):
    def make(cfg, data=None):
        train, test = data or tiny_data
        return Simulation(cfg, train_set=train, test_set=test)
    return make


@pytest.fixture
def write_idx(tmp_path):
    def write(images, labels, rows=28, cols=28, prefix="set"):
        img_path = os.path.join(tmp_path, f"{prefix}-images-idx3-ubyte")
        lbl_path = os.path.join(tmp_path, f"{prefix}-labels-idx1-ubyte")
        dump_images(img_path, np.asarray(images), rows, cols)
        dump_labels(lbl_path, np.asarray(labels))
        return img_path, lbl_path
    return write


@pytest.fixture
def small_config(tmp_path):
    """Config file for a three-user synthetic run that finishes in well under a second."""
    path = os.path.join(tmp_path, "config.json")
    with open(path, "w") as f:
        json.dump({
            "sim.num_users": 3,
            "sim.rounds": 3,
            "data.source": "synthetic",
            "data.synthetic_train": 60,
            "data.synthetic_test": 30,
            "train.hidden_width": 4,
        }, f)
    return path
