"""
Differentiable building blocks used across the pipeline.

Everything here is a thin composition of torch operations, so torch autograd
provides the reverse sweep. Inputs are expected in float64.
"""

import torch
import torch.nn.functional as F

from src.constants.common_constants import NumericDefaults
from src.errors import ContractViolation


def softplus(z: torch.Tensor, threshold: float = NumericDefaults.SOFTPLUS_THRESHOLD) -> torch.Tensor:
    """log(1 + e^z), returning z itself above ``threshold``."""
    # Clamp before exp so the unselected branch cannot produce inf (and NaN gradients).
    safe = torch.log1p(torch.exp(torch.clamp(z, max=threshold)))
    return torch.where(z > threshold, z, safe)


def inverse_softplus(y: float) -> float:
    """Pre-image of ``softplus`` for y > 0."""
    if y <= 0:
        raise ContractViolation(f"inverse_softplus requires y > 0, got {y}")
    return float(torch.log(torch.expm1(torch.tensor(y, dtype=NumericDefaults.DTYPE))))


def rms_norm(
    x: torch.Tensor, scale: torch.Tensor, eps: float = NumericDefaults.RMS_EPS
) -> torch.Tensor:
    """Normalise the last axis by sqrt(mean(x^2) + eps) and apply a learned scale."""
    rms = torch.sqrt(torch.mean(x * x, dim=-1, keepdim=True) + eps)
    return x / rms * scale


def depthwise_dilated_conv1d(x: torch.Tensor, weight: torch.Tensor, dilation: int) -> torch.Tensor:
    """
    Per-channel 1D convolution with zero padding that preserves the length.

    Args:
        x: ``[C, L]`` or ``[B, C, L]``
        weight: ``[C, k]`` with k odd
        dilation: spacing between kernel taps

    Returns:
        Tensor with the same shape as ``x``.
    """
    channels, kernel = weight.shape
    squeeze = x.dim() == 2
    batch = x.unsqueeze(0) if squeeze else x
    padding = dilation * (kernel - 1) // 2
    out = F.conv1d(
        batch, weight.unsqueeze(1), padding=padding, dilation=dilation, groups=channels
    )
    return out.squeeze(0) if squeeze else out


def select_by_mask(mask: torch.Tensor, when_true: torch.Tensor, when_false: torch.Tensor) -> torch.Tensor:
    return torch.where(mask.bool(), when_true, when_false)
