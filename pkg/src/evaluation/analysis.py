"""
Diagnostics emitted as CSV: memory decay along the sequence, per-channel
locality ranking and anchor cosine scores.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from src.constants.common_constants import FileFormats
from src.data.synthetic import Bag
from src.errors import ContractViolation
from src.mil.anchor import anchor_attention
from src.mil.model import BagTensors, SelectiveScanMIL
from src.ssm.locality import channel_locality
from src.ssm.selective_scan import StepParameters
from src.tensor.functional import rms_norm

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DECAY_FIELDS = ("distance", "min", "mean", "max")


def format_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), FileFormats.FLOAT_FORMAT)
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.info("Wrote %d rows to %s", count, path)
    return count


def decay_curve(steps: StepParameters, update: Optional[torch.Tensor] = None) -> np.ndarray:
    """
    [N, C, S] factor by which token 0 survives at token m: exp(A * sum of the
    effective deltas of tokens 1..m). A token that does not update a channel
    contributes delta 0 there.
    """
    delta = steps.delta.detach()
    if update is not None:
        delta = torch.where(update, delta, torch.zeros_like(delta))
    spans = torch.cat([torch.zeros_like(delta[:1]), torch.cumsum(delta[1:], dim=0)])
    return torch.exp(steps.A.detach().unsqueeze(0) * spans.unsqueeze(2)).numpy()


def decay_rows(curve: np.ndarray) -> List[Tuple[int, float, float, float]]:
    flat = curve.reshape(curve.shape[0], -1)
    return [
        (m, float(flat[m].min()), float(flat[m].mean()), float(flat[m].max()))
        for m in range(flat.shape[0])
    ]


@torch.no_grad()
def analyze_decay(
    model: SelectiveScanMIL, bag: BagTensors, cts: bool, out_path: Optional[PathLike] = None
) -> List[Tuple[int, float, float, float]]:
    """Decay of the first scan block on ``bag``; with ``cts`` the model's own token mask gates delta."""
    if bag.size < 1:
        raise ContractViolation(f"bag {bag.bag_id} is empty")
    if cts and model.instance_learner is None:
        raise ContractViolation("decay with token selection needs a model trained with it")
    prediction = model(bag)
    scan = prediction.scans[0]
    update = None
    if cts:
        keep = prediction.token_mask.keep
        update = keep.unsqueeze(1).expand(scan.steps.length, scan.steps.channels)
        exempt = prediction.channel_exemptions[0]
        if exempt is not None:
            update = update | exempt.unsqueeze(0)
        logger.info("bag %s: %d of %d tokens masked", bag.bag_id, prediction.token_mask.masked_count, bag.size)
    rows = decay_rows(decay_curve(scan.steps, update))
    if out_path is not None:
        write_csv(out_path, DECAY_FIELDS, rows)
    return rows


@torch.no_grad()
def block_locality(model: SelectiveScanMIL, bag: BagTensors) -> np.ndarray:
    """[n_blocks, C] locality over the full span, on the unmasked block inputs."""
    if bag.size < 2:
        raise ContractViolation(f"locality needs at least two tokens, bag {bag.bag_id} has {bag.size}")
    x = model.embed(bag.features)
    if model.s2pe is not None:
        x = model.s2pe(x, bag.back_map, bag.height, bag.width)
    scores = []
    for block in model.blocks:
        steps = block.ssm.steps(rms_norm(x, block.norm_scale))
        scores.append(channel_locality(steps).numpy())
        x = x + block.ssm.scan(steps).outputs
    return np.stack(scores)


def rank_channels(scores: np.ndarray) -> np.ndarray:
    """Rank (0 = most local) per channel; ties go to the lower channel index."""
    order = np.lexsort((np.arange(scores.size), -scores))
    ranks = np.empty(scores.size, dtype=np.int64)
    ranks[order] = np.arange(scores.size)
    return ranks


def analyze_locality(
    model: SelectiveScanMIL,
    bags: Sequence[BagTensors],
    k_values: Sequence[int],
    out_path: Optional[PathLike] = None,
) -> List[list]:
    """Rows ``block, channel, alpha, rank, top_<K>...``; alpha is averaged over ``bags``."""
    if not bags:
        raise ContractViolation("locality analysis needs at least one bag")
    channels = model.config.d_model
    for k in k_values:
        if not 0 <= k <= channels:
            raise ContractViolation(f"K={k} outside 0..{channels}")
    alpha = np.mean([block_locality(model, bag) for bag in bags], axis=0)
    rows = []
    for block, scores in enumerate(alpha):
        ranks = rank_channels(scores)
        for channel in range(channels):
            membership = [int(ranks[channel] < k) for k in k_values]
            rows.append([block, channel, float(scores[channel]), int(ranks[channel])] + membership)
    if out_path is not None:
        header = ["block", "channel", "alpha", "rank"] + [f"top_{k}" for k in k_values]
        write_csv(out_path, header, rows)
    return rows


def analyze_anchor(bag: Bag, anchor: int, out_path: Optional[PathLike] = None) -> List[list]:
    """Rows ``token, row, col, instance_label, score`` for every token of ``bag``."""
    scores = anchor_attention(bag.features, anchor)
    coords = bag.index.coords
    rows = [
        [i, int(coords[i, 0]), int(coords[i, 1]), int(bag.instance_labels[i]), float(scores[i])]
        for i in range(scores.size)
    ]
    if out_path is not None:
        write_csv(out_path, ("token", "row", "col", "instance_label", "score"), rows)
    return rows
