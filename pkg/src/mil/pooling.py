"""Gated attention pooling over the unmasked tokens of a bag."""

from typing import Optional, Tuple

import torch
from torch import nn

from src.constants.common_constants import NumericDefaults
from src.errors import ContractViolation


class GatedAttentionPooling(nn.Module):
    """score_i = w . (tanh(V h_i) * sigmoid(U h_i)); weights are the softmax over kept tokens."""

    def __init__(self, d_model: int, attention_dim: int):
        super().__init__()
        self.attention_V = nn.Linear(d_model, attention_dim, dtype=NumericDefaults.DTYPE)
        self.attention_U = nn.Linear(d_model, attention_dim, dtype=NumericDefaults.DTYPE)
        self.attention_w = nn.Linear(attention_dim, 1, dtype=NumericDefaults.DTYPE)

    def forward(
        self, tokens: torch.Tensor, keep: Optional[torch.Tensor] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Bag embedding [d_model] and attention weights [N] (exactly 0 on masked tokens)."""
        if tokens.dim() != 2 or tokens.shape[0] < 1:
            raise ContractViolation(f"attention pooling expects [N >= 1, d] tokens, got {tuple(tokens.shape)}")
        gate = torch.tanh(self.attention_V(tokens)) * torch.sigmoid(self.attention_U(tokens))
        scores = self.attention_w(gate).squeeze(-1)
        if keep is not None:
            if not bool(keep.any()):
                raise ContractViolation("every token is masked; nothing to pool")
            scores = scores.masked_fill(~keep.bool(), float("-inf"))
        weights = torch.softmax(scores, dim=0)
        return weights @ tokens, weights
