"""Unit tests for the per-channel locality indicator."""

import math

import pytest
import torch

from src.constants.common_constants import SsmModes
from src.errors import ContractViolation
from src.ssm.locality import channel_locality, locality_indicator
from src.ssm.selective_scan import SelectiveSSM, StepParameters

DTYPE = torch.float64


def hand_steps(deltas, A, b_bar=1.0, c=1.0):
    """Steps with one state per channel; the same delta, B_bar and C on every channel."""
    delta = torch.tensor(deltas, dtype=DTYPE).unsqueeze(1).expand(-1, A.shape[0])
    n, channels = delta.shape
    a_bar = torch.exp(delta.unsqueeze(2) * A.unsqueeze(0))
    return StepParameters(
        x=torch.zeros(n, channels, dtype=DTYPE),
        delta=delta,
        A=A,
        B=torch.full((n, 1), b_bar, dtype=DTYPE),
        C=torch.full((n, 1), c, dtype=DTYPE),
        a_bar=a_bar,
        b_bar=torch.full((n, channels, 1), b_bar, dtype=DTYPE),
    )


class TestChannelLocality:
    def test_two_unit_steps(self):
        steps = hand_steps([0.5, 1.0, 1.0], -torch.ones(1, 1, dtype=DTYPE))
        assert channel_locality(steps, span=(0, 2), channel=0).item() == pytest.approx(math.exp(-2.0), rel=1e-15)

    def test_identical_channels_score_alike(self):
        steps = hand_steps([0.3, 0.2, 0.7, 0.1], -torch.full((3, 1), 0.8, dtype=DTYPE))
        alpha = channel_locality(steps)
        assert torch.equal(alpha, alpha[0].expand(3))

    def test_faster_decay_scores_lower(self):
        steps = hand_steps([0.3, 0.2, 0.7, 0.1], -torch.tensor([[0.5], [2.0]], dtype=DTYPE))
        alpha = channel_locality(steps)
        assert alpha[0] > alpha[1]

    def test_adjacent_span_tends_to_c_times_b_bar(self):
        steps = hand_steps([0.4, 1e-12], -torch.ones(2, 1, dtype=DTYPE), b_bar=0.6, c=1.5)
        alpha = channel_locality(steps, span=(0, 1))
        assert torch.allclose(alpha, torch.full((2,), 0.9, dtype=DTYPE), rtol=1e-10, atol=0)

    def test_empty_span_is_c_times_b_bar(self):
        c_j = torch.tensor([2.0, -1.0], dtype=DTYPE)
        b_bar_j = torch.tensor([[0.5, 0.25]], dtype=DTYPE)
        alpha = locality_indicator(c_j, torch.zeros(0, 1, 2, dtype=DTYPE), b_bar_j)
        assert alpha.tolist() == [0.75]

    def test_scalar_mode_shares_alpha_within_a_head(self):
        torch.manual_seed(3)
        layer = SelectiveSSM(6, 3, mode=SsmModes.SCALAR, n_heads=2)
        tokens = torch.randn(7, 6, generator=torch.Generator().manual_seed(4), dtype=DTYPE)
        with torch.no_grad():
            alpha = channel_locality(layer.steps(tokens))
        assert torch.equal(alpha[:3], alpha[0].expand(3))
        assert torch.equal(alpha[3:], alpha[3].expand(3))

    @pytest.mark.parametrize("span", [(1, 1), (2, 1), (-1, 2), (0, 3)])
    def test_span_out_of_order(self, span):
        steps = hand_steps([0.1, 0.2, 0.3], -torch.ones(1, 1, dtype=DTYPE))
        with pytest.raises(ContractViolation, match="span"):
            channel_locality(steps, span=span)

    def test_channel_out_of_range(self):
        steps = hand_steps([0.1, 0.2], -torch.ones(2, 1, dtype=DTYPE))
        with pytest.raises(ContractViolation, match="channel 2"):
            channel_locality(steps, channel=2)
