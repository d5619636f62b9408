"""
Evaluation and ablation runs.

An ablation grid varies one knob (``r``, ``baseline`` or ``overlap``) over a
list of values, trains one model per (value, seed) and evaluates it on the
test split. Cells are independent and may run in worker processes; results
are sorted by (value position, seed) before they are written.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from src.constants.common_constants import BaselineKinds, Splits
from src.data.storage import load_dataset
from src.data.synthetic import Dataset
from src.errors import ContractViolation
from src.evaluation.analysis import write_csv
from src.evaluation.metrics import MetricReport
from src.mil.config import ModelConfig
from src.mil.model import prepare_bag
from src.mil.training import evaluate_model, train, train_baseline, validation_bags

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GRID_KEYS = ("r", "baseline", "overlap")
ABLATION_FIELDS = ("key", "value", "seed", "auc", "acc", "macro_f1")


def evaluate(model: nn.Module, dataset: Dataset, split: str, config: ModelConfig) -> MetricReport:
    if split == Splits.VALIDATION:
        bags = validation_bags(dataset, config)
    else:
        bags = dataset.split(split)
    if not bags:
        raise ContractViolation(f"split {split!r} holds no bags")
    tensors = [prepare_bag(bag, config.overlap) for bag in bags]
    report = evaluate_model(model, tensors, seed=config.seed, config_fingerprint=config.fingerprint())
    logger.info("%s split: auc %.4f, acc %.4f, macro F1 %.4f", split, report.auc, report.acc, report.macro_f1)
    return report


def parse_grid(text: str) -> Tuple[str, List[str]]:
    """``key=v1,v2,...`` into the key and its raw values."""
    if "=" not in text:
        raise ContractViolation(f"grid {text!r} is not of the form key=v1,v2")
    key, raw = (part.strip() for part in text.split("=", 1))
    values = [value.strip() for value in raw.split(",") if value.strip()]
    if key not in GRID_KEYS:
        raise ContractViolation(f"unknown grid key {key!r}; expected one of {GRID_KEYS}")
    if not values:
        raise ContractViolation(f"grid {key!r} lists no values")
    for value in values:
        if key == "r":
            try:
                ratio = float(value)
            except ValueError:
                raise ContractViolation(f"r value {value!r} is not a number") from None
            if not 0.0 <= ratio < 1.0:
                raise ContractViolation(f"r value {ratio} outside [0, 1)")
        elif key == "baseline" and value not in BaselineKinds.ALL:
            raise ContractViolation(f"unknown baseline {value!r}; expected one of {BaselineKinds.ALL}")
        elif key == "overlap" and value not in ("on", "off"):
            raise ContractViolation(f"overlap value must be on or off, got {value!r}")
    return key, values


@dataclass(frozen=True)
class Cell:
    data_dir: str
    config_text: str
    key: str
    value: str
    seed: int
    torch_threads: int = 1


@lru_cache(maxsize=4)
def _cached_dataset(data_dir: str) -> Dataset:
    return load_dataset(data_dir)


def run_cell(cell: Cell) -> Tuple[str, str, int, float, float, float]:
    torch.set_num_threads(cell.torch_threads)
    dataset = _cached_dataset(cell.data_dir)
    config = ModelConfig.from_text(cell.config_text).replace(seed=cell.seed)
    if cell.key == "r":
        config = config.replace(cts_ratio=float(cell.value), use_cts=True)
        result = train(dataset, config)
    elif cell.key == "overlap":
        config = config.replace(overlap=cell.value == "on")
        result = train(dataset, config)
    else:
        result = train_baseline(dataset, config, cell.value)
    report = evaluate(result.model, dataset, Splits.TEST, config)
    logger.info("%s=%s seed %d: auc %.4f", cell.key, cell.value, cell.seed, report.auc)
    return cell.key, cell.value, cell.seed, report.auc, report.acc, report.macro_f1


def ablate(
    data_dir: PathLike,
    config: ModelConfig,
    grid: str,
    seeds: Sequence[int],
    jobs: int = 1,
    torch_threads: int = 1,
    report_path: PathLike = None,
) -> List[list]:
    """Per-seed rows then ``mean``/``std`` rows for every grid value."""
    key, values = parse_grid(grid)
    if not seeds:
        raise ContractViolation("ablation needs at least one seed")
    cells = [
        Cell(str(data_dir), config.to_text(), key, value, int(seed), torch_threads)
        for value in values
        for seed in sorted(set(seeds))
    ]
    logger.info("Ablating %s over %d values x %d seeds with %d jobs", key, len(values), len(seeds), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    position = {value: i for i, value in enumerate(values)}
    results.sort(key=lambda row: (position[row[1]], row[2]))
    rows: List[list] = [list(row) for row in results]
    for value in values:
        metrics = np.array([row[3:] for row in results if row[1] == value], dtype=np.float64)
        rows.append([key, value, "mean"] + [float(v) for v in metrics.mean(axis=0)])
        rows.append([key, value, "std"] + [float(v) for v in metrics.std(axis=0)])
    if report_path is not None:
        write_csv(report_path, ABLATION_FIELDS, rows)
    return rows
