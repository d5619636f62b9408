import os

import numpy as np
import pytest
import torch

from src.constants.common_constants import EnvVars, Splits
from src.data.synthetic import BagSpec, generate_dataset
from src.mil.config import ModelConfig


@pytest.fixture(scope="session", autouse=True)
def single_torch_thread():
    """Keep timing and float summation order stable across machines."""
    torch.set_num_threads(1)


@pytest.fixture(autouse=True)
def clean_runtime_env(monkeypatch):
    """Runtime settings come from the test, never from the developer's shell."""
    for name in (EnvVars.LOG_LEVEL, EnvVars.JOBS, EnvVars.TORCH_THREADS):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return BagSpec(height=4, width=4, feature_dim=6, cluster_radius=1.0, signal_strength=3.0, noise_scale=0.3)


@pytest.fixture
def small_config():
    """Tiny model over the ``small_spec`` feature width."""
    return ModelConfig(
        in_features=6,
        d_model=8,
        state_dim=4,
        n_blocks=1,
        attention_dim=4,
        epochs=2,
        cts_ratio=0.3,
        validation_fraction=0.0,
    )


@pytest.fixture
def small_dataset(small_spec):
    """Six bags; the last two (one per class) form the test split."""
    dataset = generate_dataset(small_spec, n_per_class=3, seed=7)
    for position, bag in enumerate(dataset.bags):
        dataset.splits[bag.bag_id] = Splits.TEST if position >= 4 else Splits.TRAIN
    return dataset


@pytest.fixture(scope="session")
def benchmark_enabled():
    return os.getenv(EnvVars.RUN_BENCHMARK) == "1"
