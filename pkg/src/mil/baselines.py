"""Pooling comparators: mean, max and gated attention over embedded tokens, no scan blocks."""

import logging

import torch
from torch import nn

from src.constants.common_constants import BaselineKinds, NumericDefaults
from src.errors import ContractViolation
from src.mil.config import ModelConfig
from src.mil.model import BagPrediction, BagTensors
from src.mil.pooling import GatedAttentionPooling
from src.selection.token_selection import TokenMask

logger = logging.getLogger(__name__)

DTYPE = NumericDefaults.DTYPE


class PoolingMIL(nn.Module):
    """Embed, pool, classify. Embed and head are built before the pooling so kinds share them per seed."""

    def __init__(self, kind: str, config: ModelConfig):
        super().__init__()
        if kind not in BaselineKinds.ALL:
            raise ContractViolation(f"Unknown baseline {kind!r}; expected one of {BaselineKinds.ALL}")
        self.kind = kind
        self.config = config
        self.embed = nn.Linear(config.in_features, config.d_model, dtype=DTYPE)
        self.head = nn.Linear(config.d_model, config.k_classes, dtype=DTYPE)
        self.pooling = (
            GatedAttentionPooling(config.d_model, config.attention_dim)
            if kind == BaselineKinds.GATED_ATTENTION
            else None
        )

    def forward(self, bag: BagTensors) -> BagPrediction:
        features = bag.features
        if features.dim() != 2 or features.shape[0] < 1:
            raise ContractViolation(f"bag {bag.bag_id} is empty or not [N, D]: {tuple(features.shape)}")
        if features.shape[1] != self.config.in_features:
            raise ContractViolation(
                f"bag {bag.bag_id} has feature dim {features.shape[1]}, config expects {self.config.in_features}"
            )
        tokens = self.embed(features)
        n = tokens.shape[0]
        if self.kind == BaselineKinds.MEAN:
            pooled = tokens.mean(dim=0)
            attention = torch.full((n,), 1.0 / n, dtype=DTYPE)
        elif self.kind == BaselineKinds.MAX:
            pooled = tokens.max(dim=0).values
            attention = torch.zeros(n, dtype=DTYPE)
        else:
            pooled, attention = self.pooling(tokens)
        return BagPrediction(
            bag_logits=self.head(pooled),
            aux_logits=None,
            attention=attention,
            token_mask=TokenMask.keep_all(n),
        )


def build_baseline(kind: str, config: ModelConfig) -> PoolingMIL:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return PoolingMIL(kind, config)


def baseline_forward(kind: str, bag: BagTensors, model: PoolingMIL) -> torch.Tensor:
    """Bag logits [k] of the ``kind`` comparator."""
    if model.kind != kind:
        raise ContractViolation(f"model pools with {model.kind!r}, asked for {kind!r}")
    return model(bag).bag_logits
