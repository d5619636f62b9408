"""
Selective-scan MIL aggregator.

Pipeline per bag: linear embed, entropy mask from the instance learner,
stripe position encoding, ``n_blocks`` masked selective-scan blocks with RMS
norm and residual, gated attention pooling over unmasked tokens, linear head.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from src.constants.common_constants import NumericDefaults
from src.data.synthetic import Bag
from src.encoding.stripe_encoder import StripePositionEncoder
from src.errors import ContractViolation
from src.mil.config import ModelConfig
from src.mil.pooling import GatedAttentionPooling
from src.scanning.grid import coarse_positions
from src.selection.token_selection import (
    InstanceLearner,
    TokenMask,
    build_mask,
    percentile_threshold,
    token_entropy,
    top_local_channels,
)
from src.ssm.locality import channel_locality
from src.ssm.selective_scan import ScanResult, SelectiveSSM
from src.tensor.functional import rms_norm

logger = logging.getLogger(__name__)

DTYPE = NumericDefaults.DTYPE


@dataclass
class BagTensors:
    """A bag as the model consumes it: token features plus their grid placement."""

    bag_id: str
    features: torch.Tensor  # [N, in_features]
    back_map: np.ndarray  # [N, 2]
    height: int
    width: int
    label: Optional[int] = None

    @property
    def size(self) -> int:
        return self.features.shape[0]


def prepare_bag(bag: Bag, overlap: bool = True) -> BagTensors:
    """
    Model view of a generated bag. With ``overlap`` off only the tokens that
    sit exactly on coarse patches are kept, on the coarse H x W grid.
    """
    if not overlap:
        positions, coarse = coarse_positions(bag.index)
        return BagTensors(
            bag_id=bag.bag_id,
            features=torch.as_tensor(bag.features[positions], dtype=DTYPE),
            back_map=coarse.coords,
            height=coarse.height,
            width=coarse.width,
            label=bag.label,
        )
    return BagTensors(
        bag_id=bag.bag_id,
        features=torch.as_tensor(bag.features, dtype=DTYPE),
        back_map=bag.index.coords,
        height=bag.index.height,
        width=bag.index.width,
        label=bag.label,
    )


@dataclass
class BagPrediction:
    bag_logits: torch.Tensor  # [k]
    aux_logits: Optional[torch.Tensor]  # [k], None without token selection
    attention: torch.Tensor  # [N], zero on masked tokens
    token_mask: TokenMask
    token_logits: Optional[torch.Tensor] = None  # [N, k] from the instance learner
    channel_exemptions: List[Optional[torch.Tensor]] = field(default_factory=list)
    scans: List[ScanResult] = field(default_factory=list, repr=False)


class ScanBlock(nn.Module):
    """x + SSM(rms_norm(x)) with token masking and per-block local-channel exemption."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.norm_scale = nn.Parameter(torch.ones(config.d_model, dtype=DTYPE))
        self.ssm = SelectiveSSM(
            config.d_model,
            state_dim=config.state_dim,
            mode=config.ssm_mode,
            n_heads=config.n_heads,
            discretization=config.discretization,
        )

    def forward(self, x: torch.Tensor, keep: Optional[torch.Tensor] = None, local_channels: int = 0):
        steps = self.ssm.steps(rms_norm(x, self.norm_scale))
        exempt = None
        if keep is not None and local_channels > 0 and steps.length >= 2:
            # ranked over the whole sequence; the ranking itself carries no gradient
            with torch.no_grad():
                scores = channel_locality(steps)
            exempt = top_local_channels(scores, local_channels)
        result = self.ssm.scan(steps, keep, exempt)
        return x + result.outputs, result, exempt


class SelectiveScanMIL(nn.Module):
    """
    Bag classifier. Submodules shared with the plain backbone are built first,
    so switching token selection or stripe encoding off leaves their
    initialisation unchanged under the same seed.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(config.in_features, config.d_model, dtype=DTYPE)
        self.blocks = nn.ModuleList([ScanBlock(config) for _ in range(config.n_blocks)])
        self.final_norm_scale = nn.Parameter(torch.ones(config.d_model, dtype=DTYPE))
        self.pooling = GatedAttentionPooling(config.d_model, config.attention_dim)
        self.head = nn.Linear(config.d_model, config.k_classes, dtype=DTYPE)
        self.instance_learner = (
            InstanceLearner(config.in_features, config.k_classes, config.instance_pooling)
            if config.use_cts
            else None
        )
        self.s2pe = (
            StripePositionEncoder(
                config.d_model,
                kernel_size=config.s2pe_kernel,
                dilation=config.s2pe_dilation,
                residual=config.s2pe_residual,
            )
            if config.use_s2pe
            else None
        )

    def token_mask(self, features: torch.Tensor):
        """Entropy-ranked mask; at least one token always stays unmasked."""
        n = features.shape[0]
        if self.instance_learner is None:
            return TokenMask.keep_all(n), None, None
        token_logits = self.instance_learner(features)
        aux_logits = self.instance_learner.bag_logits(token_logits)
        ratio = self.config.cts_ratio
        threshold, selected = percentile_threshold(token_entropy(token_logits), ratio, max_selected=n - 1)
        mask = build_mask(n, selected, threshold=threshold, ratio=ratio)
        return mask, token_logits, aux_logits

    def forward(self, bag: BagTensors) -> BagPrediction:
        features = bag.features
        if features.dim() != 2 or features.shape[0] < 1:
            raise ContractViolation(f"bag {bag.bag_id} is empty or not [N, D]: {tuple(features.shape)}")
        if features.shape[1] != self.config.in_features:
            raise ContractViolation(
                f"bag {bag.bag_id} has feature dim {features.shape[1]}, config expects {self.config.in_features}"
            )
        mask, token_logits, aux_logits = self.token_mask(features)
        if mask.masked_count == features.shape[0]:
            raise ContractViolation(f"every token of bag {bag.bag_id} is masked")
        keep = mask.keep if mask.masked_count else None

        x = self.embed(features)
        if self.s2pe is not None:
            x = self.s2pe(x, bag.back_map, bag.height, bag.width, mask.keep)

        exemptions, scans = [], []
        for block in self.blocks:
            x, result, exempt = block(x, keep, self.config.local_channels)
            exemptions.append(exempt)
            scans.append(result)
        if exemptions and exemptions[0] is not None:
            mask.channel_exempt = exemptions[0]

        pooled, attention = self.pooling(rms_norm(x, self.final_norm_scale), keep)
        logger.debug("bag %s: %d tokens, %d masked", bag.bag_id, features.shape[0], mask.masked_count)
        return BagPrediction(
            bag_logits=self.head(pooled),
            aux_logits=aux_logits,
            attention=attention,
            token_mask=mask,
            token_logits=token_logits,
            channel_exemptions=exemptions,
            scans=scans,
        )


def build_model(config: ModelConfig) -> SelectiveScanMIL:
    """Model initialised from ``config.seed`` without touching the global torch generator."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return SelectiveScanMIL(config)


def predict_bag(bag: Bag, model: SelectiveScanMIL) -> BagPrediction:
    return model(prepare_bag(bag, overlap=model.config.overlap))


def loss(pred: BagPrediction, label: int, aux_weight: float) -> torch.Tensor:
    """Cross-entropy of the bag logits, plus ``aux_weight`` times that of the auxiliary logits."""
    k = pred.bag_logits.shape[-1]
    if not 0 <= int(label) < k:
        raise ContractViolation(f"label {label} outside 0..{k - 1}")
    target = torch.tensor([int(label)])
    total = F.cross_entropy(pred.bag_logits.unsqueeze(0), target)
    if pred.aux_logits is not None and aux_weight != 0:
        total = total + aux_weight * F.cross_entropy(pred.aux_logits.unsqueeze(0), target)
    return total
