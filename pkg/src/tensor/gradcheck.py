"""Central finite-difference oracle for reverse-mode gradients."""

import logging
import math
from typing import Callable, Sequence

import numpy as np
import torch

from src.constants.common_constants import NumericDefaults
from src.errors import ContractViolation, GradCheckFailure

logger = logging.getLogger(__name__)


def _evaluate(f: Callable[[], torch.Tensor], param_index: int, coordinate) -> float:
    with torch.no_grad():
        value = float(f())
    if not math.isfinite(value):
        raise GradCheckFailure(f"objective returned {value}", param_index, coordinate)
    return value


def grad_check(
    f: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = NumericDefaults.GRAD_CHECK_EPS,
) -> float:
    """
    Max over all coordinates of |analytic - central difference| / max(1, |analytic|).

    ``f`` closes over ``params`` and returns a scalar tensor. Each parameter is
    perturbed in place and restored exactly afterwards.
    """
    if eps <= 0:
        raise ContractViolation(f"grad_check step must be positive, got {eps}")
    params = list(params)
    for p in params:
        if not p.requires_grad:
            raise ContractViolation("grad_check parameters must require gradients")

    loss = f()
    if loss.numel() != 1:
        raise ContractViolation(f"grad_check objective must be scalar, got {tuple(loss.shape)}")
    if not torch.isfinite(loss).all():
        raise GradCheckFailure(f"objective returned {float(loss)}", -1, ())
    analytic = torch.autograd.grad(loss.reshape(()), params, allow_unused=True)

    worst = 0.0
    for index, (param, grad) in enumerate(zip(params, analytic)):
        grad = torch.zeros_like(param) if grad is None else grad.detach()
        values = param.data
        for position in range(param.numel()):
            coordinate = tuple(int(c) for c in np.unravel_index(position, tuple(param.shape)))
            original = values[coordinate].item()
            try:
                values[coordinate] = original + eps
                plus = _evaluate(f, index, coordinate)
                values[coordinate] = original - eps
                minus = _evaluate(f, index, coordinate)
            finally:
                values[coordinate] = original
            numeric = (plus - minus) / (2.0 * eps)
            exact = grad[coordinate].item()
            error = abs(exact - numeric) / max(1.0, abs(exact))
            if error > worst:
                worst = error
                logger.debug(
                    "grad_check worst so far %.3e at parameter %d %s", error, index, coordinate
                )
    return worst
