"""
Contextual token selection.

An auxiliary per-token classifier (the instance learner) scores every token;
the tokens whose predictive entropy is highest are masked so that the scan
state passes through them. Optionally the K most local channels are exempt
from masking.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from src.constants.common_constants import (
    NO_SELECTION_THRESHOLD,
    InstancePooling,
    NumericDefaults,
    TokenSelectionDefaults,
)
from src.errors import ContractViolation

logger = logging.getLogger(__name__)


class InstanceLearner(nn.Module):
    """Affine per-token classifier over raw features, with a pooled bag prediction."""

    def __init__(self, in_features: int, k_classes: int, pooling: str = InstancePooling.DEFAULT):
        super().__init__()
        if pooling not in InstancePooling.ALL:
            raise ContractViolation(f"Unknown instance pooling {pooling!r}")
        self.in_features = in_features
        self.k_classes = k_classes
        self.pooling = pooling
        self.classifier = nn.Linear(in_features, k_classes, dtype=NumericDefaults.DTYPE)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return instance_logits(features, self)

    def bag_logits(self, token_logits: torch.Tensor) -> torch.Tensor:
        if self.pooling == InstancePooling.MAX:
            return token_logits.max(dim=0).values
        return token_logits.mean(dim=0)


def instance_logits(features: torch.Tensor, learner: InstanceLearner) -> torch.Tensor:
    """[N, k] logits. Features are detached so the learner never shapes upstream tensors."""
    if features.dim() != 2 or features.shape[1] != learner.in_features:
        raise ContractViolation(
            f"instance learner expects [N, {learner.in_features}] features, got {tuple(features.shape)}"
        )
    return learner.classifier(features.detach())


def token_entropy(logits: torch.Tensor) -> torch.Tensor:
    """Softmax entropy in nats per token, in [0, log k]."""
    if logits.dim() != 2 or logits.shape[1] < 2:
        raise ContractViolation(f"entropy needs [N, k >= 2] logits, got {tuple(logits.shape)}")
    log_p = torch.log_softmax(logits, dim=1)
    return -(log_p.exp() * log_p).sum(dim=1)


def selection_count(n: int, ratio: float) -> int:
    """ceil(ratio * n), taken after rounding away binary representation error."""
    if not 0.0 <= ratio < 1.0:
        raise ContractViolation(f"selection ratio must lie in [0, 1), got {ratio}")
    return math.ceil(round(ratio * n, TokenSelectionDefaults.COUNT_ROUNDING_DIGITS))


def _as_numpy(values: Union[torch.Tensor, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64)


def percentile_threshold(
    entropies: Union[torch.Tensor, Sequence[float], np.ndarray],
    ratio: float,
    max_selected: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """
    Select the ceil(ratio * N) highest-entropy tokens.

    Ties are resolved toward the higher flat index. Returns the threshold (the
    smallest selected entropy, +inf when nothing is selected) and the selected
    indices in ascending order. ``max_selected`` caps the count.
    """
    values = _as_numpy(entropies).reshape(-1)
    n = values.size
    if n < 1:
        raise ContractViolation("percentile_threshold requires at least one token")
    if not np.isfinite(values).all():
        raise ContractViolation("entropies must be finite")
    m = selection_count(n, ratio)
    if max_selected is not None and m > max_selected:
        logger.warning("Selection capped from %d to %d of %d tokens", m, max_selected, n)
        m = max(max_selected, 0)
    if m == 0:
        return NO_SELECTION_THRESHOLD, np.zeros(0, dtype=np.int64)
    index = np.arange(n)
    # lexsort keys: primary is the last one
    order = np.lexsort((-index, -values))
    selected = np.sort(order[:m])
    return float(values[selected].min()), selected.astype(np.int64)


@dataclass
class TokenMask:
    """keep[i] == False marks token i as selected for passthrough."""

    keep: torch.Tensor  # [N] bool
    threshold: float = NO_SELECTION_THRESHOLD
    ratio: float = 0.0
    channel_exempt: Optional[torch.Tensor] = None  # [C] bool

    @property
    def masked_count(self) -> int:
        return int((~self.keep).sum())

    @property
    def selected(self) -> np.ndarray:
        return np.nonzero(~self.keep.cpu().numpy())[0]

    @classmethod
    def keep_all(cls, n: int) -> "TokenMask":
        return cls(keep=torch.ones(n, dtype=torch.bool))


def top_local_channels(
    locality_scores: Union[torch.Tensor, Sequence[float], np.ndarray], k_local: int
) -> torch.Tensor:
    """[C] bool marking the ``k_local`` largest scores; ties go to the lower channel index."""
    scores = _as_numpy(locality_scores).reshape(-1)
    channels = scores.size
    if not 0 <= k_local <= channels:
        raise ContractViolation(f"K={k_local} outside 0..{channels} channels")
    exempt = np.zeros(channels, dtype=bool)
    if k_local:
        order = np.lexsort((np.arange(channels), -scores))
        exempt[order[:k_local]] = True
    return torch.from_numpy(exempt)


def build_mask(
    n: int,
    selected: Union[Sequence[int], np.ndarray],
    locality_scores: Optional[Union[torch.Tensor, Sequence[float], np.ndarray]] = None,
    k_local: int = 0,
    threshold: float = NO_SELECTION_THRESHOLD,
    ratio: float = 0.0,
) -> TokenMask:
    selected = np.asarray(selected, dtype=np.int64).reshape(-1)
    if selected.size and (selected.min() < 0 or selected.max() >= n):
        raise ContractViolation(f"selected indices fall outside 0..{n - 1}")
    keep = np.ones(n, dtype=bool)
    keep[selected] = False
    exempt = None
    if locality_scores is not None:
        exempt = top_local_channels(locality_scores, k_local)
    elif k_local:
        raise ContractViolation("local-channel exemption needs locality scores")
    return TokenMask(
        keep=torch.from_numpy(keep), threshold=threshold, ratio=ratio, channel_exempt=exempt
    )
