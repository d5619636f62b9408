"""
Selective state-space layer and its sequential scan.

Per token t the layer derives x_t (input projection), delta_t (softplus), B_t
and C_t from the token embedding, discretises A with delta_t and runs

    h_t = A_bar_t * h_{t-1} + B_bar_t * x_t,    y_t = C_t . h_t

per channel. Tokens with mask 0 leave the state untouched on every channel
that is not exempt.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import nn

from src.constants.common_constants import (
    Discretization,
    NumericDefaults,
    SsmDefaults,
    SsmModes,
)
from src.errors import ContractViolation
from src.ssm.discretization import discretize
from src.tensor.functional import inverse_softplus, softplus

logger = logging.getLogger(__name__)

DTYPE = NumericDefaults.DTYPE


@dataclass
class StepParameters:
    """Per-token quantities of one scan. Channel axis C, state axis S."""

    x: torch.Tensor  # [N, C]
    delta: torch.Tensor  # [N, C]
    A: torch.Tensor  # [C, S]
    B: torch.Tensor  # [N, S]
    C: torch.Tensor  # [N, S]
    a_bar: torch.Tensor  # [N, C, S]
    b_bar: torch.Tensor  # [N, C, S]

    @property
    def length(self) -> int:
        return self.x.shape[0]

    @property
    def channels(self) -> int:
        return self.x.shape[1]


@dataclass
class ScanState:
    h: torch.Tensor  # [C, S]
    step: int


@dataclass
class ScanResult:
    outputs: torch.Tensor  # [N, d_model]
    states: torch.Tensor  # [N, C, S]
    steps: StepParameters

    @property
    def final_state(self) -> ScanState:
        return ScanState(h=self.states[-1], step=self.states.shape[0])


class SelectiveSSM(nn.Module):
    """
    State-space parameters: A = -exp(a_log) and the projections producing x_t,
    delta_t, B_t, C_t and the output.

    ``diag`` mode keeps one A entry per (channel, state); ``scalar`` mode keeps
    one A per head, shared by the head's channels and states.
    """

    def __init__(
        self,
        d_model: int,
        state_dim: int = SsmDefaults.STATE_DIM,
        mode: str = SsmModes.DEFAULT,
        n_heads: int = SsmDefaults.N_HEADS,
        discretization: str = Discretization.DEFAULT,
        initial_delta: float = SsmDefaults.INITIAL_DELTA,
    ):
        super().__init__()
        if mode not in SsmModes.ALL:
            raise ContractViolation(f"Unknown SSM mode {mode!r}; expected one of {SsmModes.ALL}")
        if discretization not in Discretization.ALL:
            raise ContractViolation(f"Unknown discretization {discretization!r}")
        if d_model < 1 or state_dim < 1 or n_heads < 1:
            raise ContractViolation("d_model, state_dim and n_heads must be positive")
        if mode == SsmModes.SCALAR and d_model % n_heads != 0:
            raise ContractViolation(f"d_model {d_model} is not divisible by n_heads {n_heads}")

        self.d_model = d_model
        self.channels = d_model
        self.state_dim = state_dim
        self.mode = mode
        self.n_heads = n_heads if mode == SsmModes.SCALAR else d_model
        self.discretization = discretization

        self.in_proj = nn.Linear(d_model, self.channels, dtype=DTYPE)
        delta_width = self.channels if mode == SsmModes.DIAG else n_heads
        self.delta_proj = nn.Linear(d_model, delta_width, dtype=DTYPE)
        self.B_proj = nn.Linear(d_model, state_dim, dtype=DTYPE)
        self.C_proj = nn.Linear(d_model, state_dim, dtype=DTYPE)
        self.out_proj = nn.Linear(self.channels, d_model, dtype=DTYPE)

        with torch.no_grad():
            self.delta_proj.bias.fill_(inverse_softplus(initial_delta))

        if mode == SsmModes.DIAG:
            spread = torch.linspace(1.0, float(state_dim), state_dim, dtype=DTYPE)
            a_init = spread.repeat(self.channels, 1)
        else:
            a_init = torch.linspace(1.0, float(state_dim), n_heads, dtype=DTYPE)
        self.a_log = nn.Parameter(torch.log(a_init))

    @property
    def A(self) -> torch.Tensor:
        """Continuous A, strictly negative; [C, S] in diag mode, [heads] in scalar mode."""
        return -torch.exp(self.a_log)

    def expanded_A(self) -> torch.Tensor:
        if self.mode == SsmModes.DIAG:
            return self.A
        per_channel = self.A.repeat_interleave(self.channels // self.n_heads)
        return per_channel.unsqueeze(1).expand(self.channels, self.state_dim)

    def head_of_channel(self, channel: int) -> int:
        if self.mode == SsmModes.DIAG:
            return channel
        return channel // (self.channels // self.n_heads)

    def steps(self, tokens: torch.Tensor) -> StepParameters:
        if tokens.dim() != 2 or tokens.shape[1] != self.d_model:
            raise ContractViolation(
                f"selective scan expects tokens [N, {self.d_model}], got {tuple(tokens.shape)}"
            )
        if tokens.shape[0] < 1:
            raise ContractViolation("selective scan requires a non-empty sequence")
        x = self.in_proj(tokens)
        delta = softplus(self.delta_proj(tokens))
        if self.mode == SsmModes.SCALAR:
            delta = delta.repeat_interleave(self.channels // self.n_heads, dim=1)
        B = self.B_proj(tokens)
        C = self.C_proj(tokens)
        A = self.expanded_A()
        a_bar, b_bar = discretize(
            A.unsqueeze(0), B.unsqueeze(1), delta.unsqueeze(2), method=self.discretization
        )
        return StepParameters(x=x, delta=delta, A=A, B=B, C=C, a_bar=a_bar, b_bar=b_bar)

    def forward(
        self,
        tokens: torch.Tensor,
        mask: Optional[torch.Tensor] = None,
        channel_exempt: Optional[torch.Tensor] = None,
    ) -> ScanResult:
        return self.scan(self.steps(tokens), mask, channel_exempt)

    def scan(
        self,
        steps: StepParameters,
        mask: Optional[torch.Tensor] = None,
        channel_exempt: Optional[torch.Tensor] = None,
    ) -> ScanResult:
        """Run the recurrence over precomputed step parameters."""
        update = update_mask(steps.length, steps.channels, mask, channel_exempt)
        states = run_recurrence(steps.a_bar, steps.b_bar, steps.x, update)
        y = torch.einsum("tcs,ts->tc", states, steps.C)
        return ScanResult(outputs=self.out_proj(y), states=states, steps=steps)


def update_mask(
    length: int,
    channels: int,
    mask: Optional[torch.Tensor],
    channel_exempt: Optional[torch.Tensor],
) -> Optional[torch.Tensor]:
    """[N, C] boolean: whether token t writes channel c."""
    if mask is None:
        return None
    if mask.shape != (length,):
        raise ContractViolation(f"mask length {tuple(mask.shape)} does not match sequence length {length}")
    keep = mask.bool().unsqueeze(1).expand(length, channels)
    if channel_exempt is None:
        return keep
    if channel_exempt.shape != (channels,):
        raise ContractViolation(
            f"channel_exempt length {tuple(channel_exempt.shape)} does not match {channels} channels"
        )
    return keep | channel_exempt.bool().unsqueeze(0)


def run_recurrence(
    a_bar: torch.Tensor,
    b_bar: torch.Tensor,
    x: torch.Tensor,
    update: Optional[torch.Tensor] = None,
    h0: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Sequential scan; returns every hidden state, [N, C, S]."""
    drive = b_bar * x.unsqueeze(2)
    if update is not None:
        gate = update.unsqueeze(2)
        # A_bar = 1 and no input: the state passes through unchanged
        a_bar = torch.where(gate, a_bar, torch.ones_like(a_bar))
        drive = torch.where(gate, drive, torch.zeros_like(drive))
    h = torch.zeros_like(a_bar[0]) if h0 is None else h0
    states = []
    for t in range(a_bar.shape[0]):
        h = a_bar[t] * h + drive[t]
        states.append(h)
    return torch.stack(states)


def selective_scan(
    tokens: torch.Tensor,
    params: SelectiveSSM,
    mask: Optional[torch.Tensor] = None,
    channel_exempt: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, ScanState]:
    """Outputs [N, d_model] and the final state."""
    result = params(tokens, mask=mask, channel_exempt=channel_exempt)
    return result.outputs, result.final_state
