"""Unit tests for grid parsing, evaluation and ablation runs."""

import csv

import numpy as np
import pytest

from src.constants.common_constants import Splits
from src.data.storage import save_dataset
from src.errors import ContractViolation
from src.evaluation.experiments import ablate, evaluate, parse_grid
from src.mil.model import build_model
from src.mil.training import validation_bags


class TestParseGrid:
    def test_ratio_grid(self):
        assert parse_grid("r=0, 0.3,0.5") == ("r", ["0", "0.3", "0.5"])

    def test_baseline_grid(self):
        assert parse_grid("baseline=mean,gated_attention") == ("baseline", ["mean", "gated_attention"])

    @pytest.mark.parametrize(
        "text",
        ["r", "depth=1,2", "r=", "r=1.0", "r=abc", "baseline=median", "overlap=yes"],
    )
    def test_rejected(self, text):
        with pytest.raises(ContractViolation):
            parse_grid(text)


class TestEvaluate:
    def test_report_on_test_split(self, small_dataset, small_config):
        report = evaluate(build_model(small_config), small_dataset, Splits.TEST, small_config)
        assert report.class_counts == {0: 1, 1: 1}
        assert report.config_fingerprint == small_config.fingerprint()
        assert 0.0 <= report.acc <= 1.0

    def test_validation_split_matches_training_hold_out(self, small_dataset, small_config):
        config = small_config.replace(validation_fraction=0.5)
        held_out = validation_bags(small_dataset, config)
        report = evaluate(build_model(config), small_dataset, Splits.VALIDATION, config)
        assert len(held_out) == 2
        assert sum(report.class_counts.values()) == 2
        assert all(small_dataset.splits[bag.bag_id] == Splits.TRAIN for bag in held_out)

    def test_empty_split(self, small_dataset, small_config):
        for bag_id in small_dataset.splits:
            small_dataset.splits[bag_id] = Splits.TRAIN
        with pytest.raises(ContractViolation, match="holds no bags"):
            evaluate(build_model(small_config), small_dataset, Splits.TEST, small_config)


class TestAblate:
    def test_rows_sorted_with_summaries(self, tmp_path, small_dataset, small_config):
        directory = save_dataset(small_dataset, tmp_path / "data")
        config = small_config.replace(epochs=1)
        report = tmp_path / "ablation.csv"
        rows = ablate(directory, config, "r=0.3,0", seeds=[1, 0], report_path=report)
        per_seed = rows[:4]
        assert [(row[1], row[2]) for row in per_seed] == [("0.3", 0), ("0.3", 1), ("0", 0), ("0", 1)]
        summaries = rows[4:]
        assert [(row[1], row[2]) for row in summaries] == [("0.3", "mean"), ("0.3", "std"), ("0", "mean"), ("0", "std")]
        accs = [row[4] for row in per_seed[:2]]
        assert summaries[0][4] == pytest.approx(np.mean(accs))
        assert summaries[1][4] == pytest.approx(np.std(accs))
        with open(report, newline="", encoding="utf-8") as handle:
            content = list(csv.reader(handle))
        assert content[0] == ["key", "value", "seed", "auc", "acc", "macro_f1"]
        assert len(content) == 9

    def test_baseline_grid_runs(self, tmp_path, small_dataset, small_config):
        directory = save_dataset(small_dataset, tmp_path / "data")
        rows = ablate(directory, small_config.replace(epochs=1), "baseline=mean,max", seeds=[0])
        assert [row[1] for row in rows[:2]] == ["mean", "max"]

    def test_needs_seeds(self, tmp_path, small_dataset, small_config):
        directory = save_dataset(small_dataset, tmp_path / "data")
        with pytest.raises(ContractViolation, match="seed"):
            ablate(directory, small_config, "r=0", seeds=[])
