"""Anchor attention: cosine similarity of every token to one anchor token."""

from typing import Union

import numpy as np
import torch

from src.errors import ContractViolation


def anchor_attention(features: Union[np.ndarray, torch.Tensor], anchor: int) -> np.ndarray:
    """score_i = <p_anchor, p_i> / (|p_anchor| |p_i|), [N]."""
    if isinstance(features, torch.Tensor):
        features = features.detach().cpu().numpy()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ContractViolation(f"anchor attention expects [N >= 1, D] features, got {features.shape}")
    n = features.shape[0]
    if not 0 <= anchor < n:
        raise ContractViolation(f"anchor {anchor} outside 0..{n - 1}")
    norms = np.linalg.norm(features, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ContractViolation(f"token {int(zero[0])} has a zero-norm feature vector")
    return features @ features[anchor] / (norms * norms[anchor])
