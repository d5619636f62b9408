"""
Operation registry with documented shape rules.

``op_forward`` validates the shape rule of each kind, evaluates it through
torch, and optionally appends a record to a ``Graph`` tape. Reverse sweeps go
through torch autograd; ``backward`` returns one gradient per requested leaf.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import torch

from src.errors import ContractViolation
from src.tensor import functional

logger = logging.getLogger(__name__)


class OpKind(str, Enum):
    MATMUL = "matmul"
    ADD = "add"
    MUL = "mul"
    EXP = "exp"
    SOFTPLUS = "softplus"
    RMS_NORM = "rms_norm"
    SOFTMAX = "softmax"
    DEPTHWISE_DILATED_CONV1D = "depthwise_dilated_conv1d"
    REDUCE_MEAN = "reduce_mean"
    REDUCE_MAX = "reduce_max"
    CONCAT = "concat"
    SLICE = "slice"
    ELEMENTWISE_SELECT_BY_MASK = "elementwise_select_by_mask"


_ARITY = {
    OpKind.MATMUL: 2,
    OpKind.ADD: 2,
    OpKind.MUL: 2,
    OpKind.EXP: 1,
    OpKind.SOFTPLUS: 1,
    OpKind.RMS_NORM: 2,
    OpKind.SOFTMAX: 1,
    OpKind.DEPTHWISE_DILATED_CONV1D: 2,
    OpKind.REDUCE_MEAN: 1,
    OpKind.REDUCE_MAX: 1,
    OpKind.SLICE: 1,
    OpKind.ELEMENTWISE_SELECT_BY_MASK: 3,
}


@dataclass(frozen=True)
class OpRecord:
    kind: OpKind
    input_shapes: Tuple[Tuple[int, ...], ...]
    output_shape: Tuple[int, ...]


@dataclass
class Graph:
    """Ordered tape of the operations executed through ``op_forward``."""

    records: List[OpRecord] = field(default_factory=list)

    def record(self, kind: OpKind, inputs: Sequence[torch.Tensor], output: torch.Tensor) -> None:
        self.records.append(
            OpRecord(
                kind=kind,
                input_shapes=tuple(tuple(t.shape) for t in inputs),
                output_shape=tuple(output.shape),
            )
        )

    def reverse_order(self) -> List[OpRecord]:
        return list(reversed(self.records))

    def reset(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


def _violation(kind: OpKind, inputs: Sequence[torch.Tensor], detail: str) -> ContractViolation:
    shapes = [tuple(t.shape) for t in inputs]
    return ContractViolation(f"{kind.value}: {detail}; input shapes {shapes}")


def _check_dim(kind: OpKind, inputs: Sequence[torch.Tensor], tensor: torch.Tensor, dim: Any) -> None:
    if dim is None:
        return
    if not -tensor.dim() <= dim < max(tensor.dim(), 1):
        raise _violation(kind, inputs, f"axis {dim} out of range")


def check_shapes(kind: OpKind, inputs: Sequence[torch.Tensor], attrs: Mapping[str, Any]) -> None:
    """Raise ``ContractViolation`` unless ``inputs`` satisfy the shape rule of ``kind``."""
    arity = _ARITY.get(kind)
    if arity is not None and len(inputs) != arity:
        raise _violation(kind, inputs, f"expected {arity} inputs, got {len(inputs)}")

    if kind is OpKind.MATMUL:
        # [m, n] x [n, p] -> [m, p]
        a, b = inputs
        if a.dim() != 2 or b.dim() != 2 or a.shape[1] != b.shape[0]:
            raise _violation(kind, inputs, "expected [m, n] and [n, p]")
    elif kind in (OpKind.ADD, OpKind.MUL):
        # identical shapes, a trailing-axis vector (bias), or a single element
        a, b = inputs
        if not (b.shape == a.shape or b.shape == a.shape[-1:] or b.numel() == 1):
            raise _violation(kind, inputs, "second operand must match, be a trailing vector or a scalar")
    elif kind is OpKind.RMS_NORM:
        x, scale = inputs
        if x.dim() < 1 or scale.shape != x.shape[-1:]:
            raise _violation(kind, inputs, "scale must match the last axis")
    elif kind is OpKind.SOFTMAX:
        (x,) = inputs
        dim = attrs.get("dim", -1)
        _check_dim(kind, inputs, x, dim)
        if x.dim() == 0 or x.shape[dim] == 0:
            raise _violation(kind, inputs, "softmax over an empty axis")
    elif kind is OpKind.DEPTHWISE_DILATED_CONV1D:
        # x: [C, L] or [B, C, L]; weight: [C, k], k odd
        x, weight = inputs
        dilation = attrs.get("dilation", 1)
        if weight.dim() != 2 or x.dim() not in (2, 3) or x.shape[-2] != weight.shape[0]:
            raise _violation(kind, inputs, "expected x [C, L] or [B, C, L] and weight [C, k]")
        kernel = weight.shape[1]
        if kernel < 1 or kernel % 2 == 0:
            raise _violation(kind, inputs, f"kernel length must be odd and >= 1, got {kernel}")
        if not isinstance(dilation, int) or dilation < 1:
            raise _violation(kind, inputs, f"dilation must be an integer >= 1, got {dilation}")
    elif kind in (OpKind.REDUCE_MEAN, OpKind.REDUCE_MAX):
        (x,) = inputs
        dim = attrs.get("dim")
        _check_dim(kind, inputs, x, dim)
        if x.numel() == 0 or (dim is not None and x.shape[dim] == 0):
            raise _violation(kind, inputs, "reduction over an empty axis")
    elif kind is OpKind.CONCAT:
        if not inputs:
            raise _violation(kind, inputs, "expected at least one input")
        dim = attrs.get("dim", 0)
        first = inputs[0]
        if first.dim() == 0:
            raise _violation(kind, inputs, "cannot concatenate zero-dimensional tensors")
        _check_dim(kind, inputs, first, dim)
        axis = dim % first.dim()
        for t in inputs[1:]:
            if t.dim() != first.dim() or any(
                t.shape[i] != first.shape[i] for i in range(first.dim()) if i != axis
            ):
                raise _violation(kind, inputs, f"shapes differ off axis {dim}")
    elif kind is OpKind.SLICE:
        (x,) = inputs
        dim = attrs.get("dim", 0)
        _check_dim(kind, inputs, x, dim)
        start, stop = attrs.get("start", 0), attrs.get("stop", x.shape[dim])
        if not 0 <= start <= stop <= x.shape[dim]:
            raise _violation(kind, inputs, f"slice [{start}:{stop}] outside extent {x.shape[dim]}")
    elif kind is OpKind.ELEMENTWISE_SELECT_BY_MASK:
        mask, a, b = inputs
        if not (mask.shape == a.shape == b.shape):
            raise _violation(kind, inputs, "mask and both branches must share a shape")


def _evaluate(kind: OpKind, inputs: Sequence[torch.Tensor], attrs: Mapping[str, Any]) -> torch.Tensor:
    if kind is OpKind.MATMUL:
        return inputs[0] @ inputs[1]
    if kind is OpKind.ADD:
        return inputs[0] + inputs[1]
    if kind is OpKind.MUL:
        return inputs[0] * inputs[1]
    if kind is OpKind.EXP:
        return torch.exp(inputs[0])
    if kind is OpKind.SOFTPLUS:
        return functional.softplus(inputs[0])
    if kind is OpKind.RMS_NORM:
        return functional.rms_norm(inputs[0], inputs[1], attrs.get("eps", 1e-6))
    if kind is OpKind.SOFTMAX:
        return torch.softmax(inputs[0], dim=attrs.get("dim", -1))
    if kind is OpKind.DEPTHWISE_DILATED_CONV1D:
        return functional.depthwise_dilated_conv1d(inputs[0], inputs[1], attrs.get("dilation", 1))
    if kind is OpKind.REDUCE_MEAN:
        dim = attrs.get("dim")
        return inputs[0].mean() if dim is None else inputs[0].mean(dim=dim)
    if kind is OpKind.REDUCE_MAX:
        dim = attrs.get("dim")
        return inputs[0].max() if dim is None else inputs[0].max(dim=dim).values
    if kind is OpKind.CONCAT:
        return torch.cat(list(inputs), dim=attrs.get("dim", 0))
    if kind is OpKind.SLICE:
        x = inputs[0]
        dim = attrs.get("dim", 0)
        start = attrs.get("start", 0)
        stop = attrs.get("stop", x.shape[dim])
        return x.narrow(dim, start, stop - start)
    if kind is OpKind.ELEMENTWISE_SELECT_BY_MASK:
        return functional.select_by_mask(*inputs)
    raise ContractViolation(f"Unknown op kind: {kind}")


def op_forward(
    kind: Union[OpKind, str],
    inputs: Sequence[torch.Tensor],
    attrs: Optional[Mapping[str, Any]] = None,
    graph: Optional[Graph] = None,
) -> torch.Tensor:
    """Evaluate one operation after validating its shape rule."""
    try:
        kind = OpKind(kind)
    except ValueError:
        raise ContractViolation(f"Unknown op kind: {kind!r}") from None
    attrs = attrs or {}
    check_shapes(kind, inputs, attrs)
    output = _evaluate(kind, inputs, attrs)
    if graph is not None:
        graph.record(kind, inputs, output)
    logger.debug("op %s -> %s", kind.value, tuple(output.shape))
    return output


Leaves = Union[Sequence[torch.Tensor], Mapping[str, torch.Tensor]]


def backward(
    loss: torch.Tensor, leaves: Leaves, graph: Optional[Graph] = None
) -> Union[List[torch.Tensor], Dict[str, torch.Tensor]]:
    """
    Gradients of a scalar ``loss`` with respect to each leaf.

    Leaves the loss does not depend on receive zeros. The tape is reset.
    """
    if loss.numel() != 1:
        raise ContractViolation(f"backward requires a scalar loss, got shape {tuple(loss.shape)}")
    named = isinstance(leaves, Mapping)
    tensors = list(leaves.values()) if named else list(leaves)
    grads = torch.autograd.grad(loss.reshape(()), tensors, allow_unused=True)
    filled = [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]
    if graph is not None:
        graph.reset()
    if named:
        return dict(zip(leaves.keys(), filled))
    return filled
