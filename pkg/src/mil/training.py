"""
Bag-at-a-time training with AdamW.

One optimiser step per bag, a fixed number of epochs, bags shuffled per epoch
from the config seed. A validation subset is carved out of the training bags
deterministically so that a saved checkpoint can be re-evaluated on it.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from src.constants.common_constants import FileFormats, LrSchedules, OptimizerDefaults, Splits
from src.data.synthetic import Bag, Dataset
from src.errors import ContractViolation, DataFormatError, TrainingDivergedError
from src.evaluation.metrics import MetricReport, report_from_probabilities
from src.mil.baselines import build_baseline
from src.mil.config import ModelConfig
from src.mil.model import BagTensors, build_model, loss, prepare_bag
from src.tensor.checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

HISTORY_FIELDS = ("epoch", "train_loss", "val_auc", "val_acc", "val_macro_f1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_auc: float = float("nan")
    val_acc: float = float("nan")
    val_macro_f1: float = float("nan")


@dataclass
class TrainingResult:
    model: nn.Module
    history: List[EpochRecord] = field(default_factory=list)
    optimizer_steps: int = 0
    train_ids: List[str] = field(default_factory=list)
    validation_ids: List[str] = field(default_factory=list)


def validation_split(bags: Sequence[Bag], fraction: float, seed: int) -> Tuple[List[Bag], List[Bag]]:
    """(train, validation), both in input order; at least one bag stays for training."""
    bags = list(bags)
    n_val = min(int(math.floor(len(bags) * fraction)), len(bags) - 1)
    if n_val <= 0:
        return bags, []
    order = np.random.default_rng(seed).permutation(len(bags))
    chosen = set(int(i) for i in order[:n_val])
    train = [bag for i, bag in enumerate(bags) if i not in chosen]
    validation = [bag for i, bag in enumerate(bags) if i in chosen]
    return train, validation


@torch.no_grad()
def evaluate_model(
    model: nn.Module, bags: Sequence[BagTensors], seed: int = 0, config_fingerprint: str = ""
) -> MetricReport:
    was_training = model.training
    model.eval()
    probabilities, labels = [], []
    for bag in bags:
        probabilities.append(torch.softmax(model(bag).bag_logits, dim=-1).numpy())
        labels.append(bag.label)
    model.train(was_training)
    return report_from_probabilities(
        np.stack(probabilities), np.asarray(labels), seed=seed, config_fingerprint=config_fingerprint
    )


def make_optimizer(model: nn.Module, config: ModelConfig):
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=config.learning_rate,
        betas=(OptimizerDefaults.BETA1, OptimizerDefaults.BETA2),
        eps=OptimizerDefaults.EPS,
        weight_decay=config.weight_decay,
    )
    scheduler = None
    if config.lr_schedule == LrSchedules.COSINE:
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs)
    return optimizer, scheduler


def fit(
    model: nn.Module,
    train_bags: Sequence[BagTensors],
    config: ModelConfig,
    validation_bags: Sequence[BagTensors] = (),
    aux_weight: Optional[float] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainingResult:
    if not train_bags:
        raise ContractViolation("training needs at least one bag")
    aux_weight = config.aux_weight if aux_weight is None else aux_weight
    optimizer, scheduler = make_optimizer(model, config)
    rng = np.random.default_rng(config.seed)
    result = TrainingResult(model=model)
    model.train()
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for position in rng.permutation(len(train_bags)):
            bag = train_bags[int(position)]
            optimizer.zero_grad()
            value = loss(model(bag), bag.label, aux_weight)
            if not torch.isfinite(value):
                raise TrainingDivergedError(epoch, bag.bag_id, float(value))
            value.backward()
            optimizer.step()
            result.optimizer_steps += 1
            total += float(value)
        if scheduler is not None:
            scheduler.step()
        record = EpochRecord(epoch=epoch, train_loss=total / len(train_bags))
        if validation_bags:
            report = evaluate_model(model, validation_bags, seed=config.seed)
            record.val_auc, record.val_acc, record.val_macro_f1 = report.auc, report.acc, report.macro_f1
        result.history.append(record)
        logger.info(
            "epoch %d/%d: train loss %.6f, val auc %.4f, val acc %.4f",
            epoch,
            config.epochs,
            record.train_loss,
            record.val_auc,
            record.val_acc,
        )
        if on_epoch is not None:
            on_epoch(record)
    return result


def _split_for_training(dataset: Dataset, config: ModelConfig) -> Tuple[List[Bag], List[Bag]]:
    if not dataset.bags:
        raise ContractViolation("dataset holds no bags")
    train_bags = dataset.split(Splits.TRAIN)
    if not train_bags:
        raise ContractViolation("dataset has no training bags")
    train, validation = validation_split(train_bags, config.validation_fraction, config.seed)
    return train, validation


def validation_bags(dataset: Dataset, config: ModelConfig) -> List[Bag]:
    """The held-out subset a run with this config validated on."""
    return _split_for_training(dataset, config)[1]


def train(dataset: Dataset, config: ModelConfig) -> TrainingResult:
    """Train the selective-scan aggregator on the dataset's train split."""
    if dataset.spec.feature_dim != config.in_features:
        raise ContractViolation(
            f"dataset feature dim {dataset.spec.feature_dim} differs from config in_features {config.in_features}"
        )
    train_bags, validation = _split_for_training(dataset, config)
    logger.info(
        "Training on %d bags (%d held out for validation), config %s",
        len(train_bags),
        len(validation),
        config.fingerprint(),
    )
    model = build_model(config)
    result = fit(
        model,
        [prepare_bag(bag, config.overlap) for bag in train_bags],
        config,
        [prepare_bag(bag, config.overlap) for bag in validation],
    )
    result.train_ids = [bag.bag_id for bag in train_bags]
    result.validation_ids = [bag.bag_id for bag in validation]
    return result


def train_baseline(dataset: Dataset, config: ModelConfig, kind: str) -> TrainingResult:
    """Same loop and optimiser for a pooling comparator; no auxiliary term."""
    train_bags, validation = _split_for_training(dataset, config)
    model = build_baseline(kind, config)
    result = fit(
        model,
        [prepare_bag(bag, config.overlap) for bag in train_bags],
        config,
        [prepare_bag(bag, config.overlap) for bag in validation],
        aux_weight=0.0,
    )
    result.train_ids = [bag.bag_id for bag in train_bags]
    result.validation_ids = [bag.bag_id for bag in validation]
    return result


def _format(value) -> str:
    if isinstance(value, float):
        return format(value, FileFormats.FLOAT_FORMAT)
    return str(value)


def write_history(history: Sequence[EpochRecord], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for record in history:
            writer.writerow([_format(getattr(record, name)) for name in HISTORY_FIELDS])


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def save_trained(
    model: nn.Module,
    config: ModelConfig,
    path: PathLike,
    history: Sequence[EpochRecord] = (),
    validation_ids: Sequence[str] = (),
) -> None:
    """Checkpoint plus ``.config``, ``.history.csv`` and ``.validation.txt`` sidecars."""
    path = Path(path)
    save_checkpoint(model.state_dict(), path)
    config.write(_sidecar(path, FileFormats.CONFIG_SUFFIX))
    write_history(history, _sidecar(path, FileFormats.HISTORY_SUFFIX))
    _sidecar(path, FileFormats.VALIDATION_SUFFIX).write_text(
        "".join(f"{bag_id}\n" for bag_id in validation_ids), encoding="utf-8"
    )


def load_validation_ids(path: PathLike) -> List[str]:
    """Bag ids the checkpoint was validated on, in training order."""
    path = Path(path)
    text = _sidecar(path, FileFormats.VALIDATION_SUFFIX).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def load_trained(path: PathLike) -> Tuple[nn.Module, ModelConfig]:
    path = Path(path)
    config = ModelConfig.from_file(_sidecar(path, FileFormats.CONFIG_SUFFIX))
    model = build_model(config)
    params = load_checkpoint(path)
    expected = model.state_dict()
    if list(params) != list(expected):
        missing = sorted(set(expected) - set(params))
        unexpected = sorted(set(params) - set(expected))
        raise DataFormatError(
            f"checkpoint does not match its config (missing {missing}, unexpected {unexpected})",
            path=str(path),
        )
    for name, tensor in params.items():
        if tensor.shape != expected[name].shape:
            raise DataFormatError(
                f"parameter {name!r} has shape {tuple(tensor.shape)}, expected {tuple(expected[name].shape)}",
                path=str(path),
            )
    model.load_state_dict(params)
    model.eval()
    return model, config
