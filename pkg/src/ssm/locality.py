"""Per-channel locality indicator: how much of token j reaches the output at token i."""

from typing import Optional, Tuple

import torch

from src.errors import ContractViolation
from src.ssm.selective_scan import StepParameters


def locality_indicator(c_j: torch.Tensor, a_bar_span: torch.Tensor, b_bar_j: torch.Tensor) -> torch.Tensor:
    """
    alpha = C_j . (prod_k A_bar_k) B_bar_j, summed over the state axis.

    Args:
        c_j: [S]
        a_bar_span: [L, C, S], the factors for tokens j+1..i (L may be 0)
        b_bar_j: [C, S]

    Returns:
        [C]
    """
    decay = torch.prod(a_bar_span, dim=0) if a_bar_span.shape[0] else torch.ones_like(b_bar_j)
    return (decay * b_bar_j * c_j.unsqueeze(0)).sum(dim=-1)


def channel_locality(
    steps: StepParameters,
    span: Optional[Tuple[int, int]] = None,
    channel: Optional[int] = None,
) -> torch.Tensor:
    """
    alpha_{i,j} per channel for 0-based tokens j < i; the default span runs
    from the first to the last token.
    """
    n = steps.length
    j, i = span if span is not None else (0, n - 1)
    if not 0 <= j < i < n:
        raise ContractViolation(f"locality span requires 0 <= j < i < {n}, got j={j}, i={i}")
    alpha = locality_indicator(steps.C[j], steps.a_bar[j + 1 : i + 1], steps.b_bar[j])
    if channel is None:
        return alpha
    if not 0 <= channel < steps.channels:
        raise ContractViolation(f"channel {channel} outside 0..{steps.channels - 1}")
    return alpha[channel]
