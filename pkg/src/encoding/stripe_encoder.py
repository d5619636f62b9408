"""
Selective stripe position encoder.

Masked tokens are zeroed, the sequence is scattered onto its rectangle, a
depthwise dilated convolution runs down every column (vertical axis only),
and the result is gathered back per token. Masked tokens keep their input.
"""

import logging
from typing import Optional

import numpy as np
import torch
from torch import nn

from src.constants.common_constants import NumericDefaults, StripeEncoderDefaults
from src.errors import ContractViolation
from src.scanning.grid import pad_to_rectangle
from src.tensor.ops import OpKind, op_forward

logger = logging.getLogger(__name__)


class StripePositionEncoder(nn.Module):
    """Per-channel vertical kernel of odd length ``kernel_size``, zero-initialised."""

    def __init__(
        self,
        channels: int,
        kernel_size: int = StripeEncoderDefaults.KERNEL_SIZE,
        dilation: int = StripeEncoderDefaults.DILATION,
        residual: bool = StripeEncoderDefaults.RESIDUAL,
    ):
        super().__init__()
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ContractViolation(f"stripe kernel length must be odd and >= 1, got {kernel_size}")
        if dilation < 1:
            raise ContractViolation(f"stripe dilation must be >= 1, got {dilation}")
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.residual = residual
        self.weight = nn.Parameter(torch.zeros(channels, kernel_size, dtype=NumericDefaults.DTYPE))

    def forward(
        self,
        sequence: torch.Tensor,
        back_map: np.ndarray,
        height: int,
        width: int,
        token_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        return apply_s2pe(sequence, back_map, height, width, token_mask, self)


def apply_s2pe(
    sequence: torch.Tensor,
    back_map: np.ndarray,
    height: int,
    width: int,
    token_mask: Optional[torch.Tensor],
    params: StripePositionEncoder,
) -> torch.Tensor:
    """Encoded sequence [N, D]; see the module docstring for the pipeline."""
    n = sequence.shape[0]
    if token_mask is None:
        keep = torch.ones(n, dtype=torch.bool)
    else:
        if token_mask.shape != (n,):
            raise ContractViolation(
                f"token mask length {tuple(token_mask.shape)} does not match {n} tokens"
            )
        keep = token_mask.bool()
    keep_col = keep.unsqueeze(1)

    visible = torch.where(keep_col, sequence, torch.zeros_like(sequence))
    grid, _ = pad_to_rectangle(visible, back_map, height, width)  # [H, W, D]
    columns = grid.permute(1, 2, 0)  # [W, D, H]: one length-H signal per column and channel
    convolved = op_forward(
        OpKind.DEPTHWISE_DILATED_CONV1D,
        [columns, params.weight],
        {"dilation": params.dilation},
    )
    conv_grid = convolved.permute(2, 0, 1)  # [H, W, D]
    rows = torch.from_numpy(np.asarray(back_map[:, 0], dtype=np.int64))
    cols = torch.from_numpy(np.asarray(back_map[:, 1], dtype=np.int64))
    conv_tokens = conv_grid[rows, cols]

    encoded = sequence + conv_tokens if params.residual else conv_tokens
    return torch.where(keep_col, encoded, sequence)
