"""Continuous-to-discrete conversion of state-space parameters and the decay law."""

from typing import Sequence, Tuple, Union

import torch

from src.constants.common_constants import Discretization, NumericDefaults
from src.errors import ContractViolation

Number = Union[float, torch.Tensor]


def _as_tensor(value: Number) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(value, dtype=NumericDefaults.DTYPE)


def discretize(
    A: Number, B: Number, delta: Number, method: str = Discretization.ZOH
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Step parameters for a diagonal A.

    zoh:   A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - 1) delta B
    euler: A_bar = exp(delta A), B_bar = delta B

    Shapes broadcast elementwise.
    """
    A, B, delta = _as_tensor(A), _as_tensor(B), _as_tensor(delta)
    if not bool((delta > 0).all()):
        raise ContractViolation(f"discretize requires delta > 0, got min {float(delta.min())}")
    if not bool((A < 0).all()):
        raise ContractViolation(f"discretize requires A < 0, got max {float(A.max())}")
    delta_a = delta * A
    a_bar = torch.exp(delta_a)
    if method == Discretization.ZOH:
        # (delta A)^-1 (exp(delta A) - 1) delta B == expm1(delta A) / A * B for diagonal A
        b_bar = torch.expm1(delta_a) / A * B
    elif method == Discretization.EULER:
        b_bar = delta * B
    else:
        raise ContractViolation(f"Unknown discretization {method!r}; expected one of {Discretization.ALL}")
    return a_bar, b_bar


def decay_factor(A: Number, deltas: Union[Sequence[float], torch.Tensor]) -> torch.Tensor:
    """exp(A * sum(deltas)): how much of token j survives in h_i for the span j+1..i."""
    A = _as_tensor(A)
    deltas = _as_tensor(deltas) if len(deltas) else torch.zeros(0, dtype=NumericDefaults.DTYPE)
    if not bool((deltas > 0).all()):
        raise ContractViolation("decay_factor requires every delta > 0")
    if not bool((A < 0).all()):
        raise ContractViolation("decay_factor requires A < 0")
    return torch.exp(A * deltas.sum(dim=0))
