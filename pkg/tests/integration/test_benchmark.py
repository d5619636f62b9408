"""
Directional benchmark on synthetic bags.

Trains the full aggregator, its ablations and the mean-pooling baseline on the
default bag spec over five seeds. Runs only with SSM_MIL_RUN_BENCHMARK=1.
"""

import numpy as np
import pytest

from src.constants.common_constants import BaselineKinds, Splits
from src.data.synthetic import BagSpec, generate_dataset
from src.evaluation.experiments import evaluate
from src.mil.config import ModelConfig
from src.mil.training import train, train_baseline

SEEDS = range(5)
BAGS_PER_CLASS = 150
TEST_PER_CLASS = 50


@pytest.fixture(scope="module")
def dataset(benchmark_enabled):
    """200 training and 100 test bags, the last fifty of each class held out."""
    if not benchmark_enabled:
        pytest.skip("set SSM_MIL_RUN_BENCHMARK=1 to run the synthetic benchmark")
    dataset = generate_dataset(BagSpec(), n_per_class=BAGS_PER_CLASS, seed=0)
    seen = {}
    for bag in dataset.bags:
        seen[bag.label] = seen.get(bag.label, 0) + 1
        held_out = seen[bag.label] > BAGS_PER_CLASS - TEST_PER_CLASS
        dataset.splits[bag.bag_id] = Splits.TEST if held_out else Splits.TRAIN
    return dataset


def mean_auc(dataset, baseline=None, **overrides):
    scores = []
    for seed in SEEDS:
        config = ModelConfig.desk(
            in_features=dataset.spec.feature_dim, epochs=30, validation_fraction=0.0, seed=seed, **overrides
        )
        result = train_baseline(dataset, config, baseline) if baseline else train(dataset, config)
        scores.append(evaluate(result.model, dataset, Splits.TEST, config).auc)
    return float(np.mean(scores))


@pytest.mark.integration
@pytest.mark.slow
@pytest.mark.timeout(0)
class TestDirectionalBenchmark:
    def test_split_sizes(self, dataset):
        assert len(dataset.split(Splits.TRAIN)) == 200
        assert len(dataset.split(Splits.TEST)) == 100

    def test_full_model_beats_mean_pooling(self, dataset):
        assert mean_auc(dataset) >= mean_auc(dataset, baseline=BaselineKinds.MEAN) + 0.05

    def test_overlapping_view_helps(self, dataset):
        with_overlap = mean_auc(dataset)
        without = mean_auc(dataset, overlap=False)
        assert with_overlap >= without - 0.01
        assert with_overlap > without

    def test_token_selection_helps(self, dataset):
        assert mean_auc(dataset, cts_ratio=0.3) >= mean_auc(dataset, cts_ratio=0.0)
