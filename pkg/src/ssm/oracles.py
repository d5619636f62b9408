"""
Closed-form hidden-state oracles.

These evaluate the unrolled recurrences by literal summation in numpy,
independently of the torch scan, and serve as reference values. Positions
are 1-based to match the unrolled sums; every factor array carries the token
(or row/column) axis first and broadcasts elementwise over the rest.
"""

from typing import Tuple

import numpy as np
import torch

from src.errors import ContractViolation


def _array(values) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values, dtype=np.float64)


def _span_product(factors: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Product of 1-based factors start+1..stop; the empty product is one."""
    return np.prod(factors[start:stop], axis=0)


def hidden_state_oracle(a_bar_seq, b_bar_seq, x_seq, i: int) -> np.ndarray:
    """h_i = sum_{j<=i} (prod_{k=j+1..i} A_bar_k) B_bar_j x_j."""
    a, b, x = _array(a_bar_seq), _array(b_bar_seq), _array(x_seq)
    n = a.shape[0]
    if b.shape[0] != n or x.shape[0] != n:
        raise ContractViolation(
            f"sequences are not aligned: {a.shape[0]}, {b.shape[0]}, {x.shape[0]} tokens"
        )
    if not 1 <= i <= n:
        raise ContractViolation(f"index {i} outside 1..{n}")
    h = 0.0
    for j in range(1, i + 1):
        h = h + _span_product(a, j, i) * b[j - 1] * x[j - 1]
    return np.asarray(h)


def linearize(i: int, j: int, width: int) -> int:
    """Row-major index of 1-based cell (i, j): (i - 1) W + j."""
    if width < 1:
        raise ContractViolation(f"width must be positive, got {width}")
    if i < 1 or not 1 <= j <= width:
        raise ContractViolation(f"cell ({i}, {j}) outside a grid of width {width}")
    return (i - 1) * width + j


def _check_location(location: Tuple[int, int], height: int, width: int) -> Tuple[int, int]:
    i, j = location
    if not (1 <= i <= height and 1 <= j <= width):
        raise ContractViolation(f"location {location} outside a {height}x{width} grid")
    return i, j


def scan_2d_oracle(grid_x, a_bar_rows, a_bar_cols, b_bar, location: Tuple[int, int]) -> np.ndarray:
    """
    h_{i,j} = sum_{u<=i} sum_{v<=j} Phi(u,v;i,j) B_bar_{u,v} x_{u,v}, with
    Phi = (prod_{p=u+1..i} a_bar_rows_p)(prod_{q=v+1..j} a_bar_cols_q).

    ``a_bar_rows`` has one factor per row and ``a_bar_cols`` one per column;
    how per-cell parameters reduce to these factors is left to the caller.
    """
    x, rows, cols, b = _array(grid_x), _array(a_bar_rows), _array(a_bar_cols), _array(b_bar)
    height, width = x.shape[0], x.shape[1]
    if rows.shape[0] != height or cols.shape[0] != width or b.shape[:2] != (height, width):
        raise ContractViolation("factor sequences do not match the grid extents")
    i, j = _check_location(location, height, width)
    h = 0.0
    for u in range(1, i + 1):
        vertical = _span_product(rows, u, i)
        for v in range(1, j + 1):
            horizontal = _span_product(cols, v, j)
            h = h + vertical * horizontal * b[u - 1, v - 1] * x[u - 1, v - 1]
    return np.asarray(h)


def split_recurrence_oracle(grid_x, a_bar_flat, b_bar, location: Tuple[int, int]) -> np.ndarray:
    """
    The flat recurrence at cell (i, j) evaluated as two sums: every cell of
    rows 1..i-1, then the prefix 1..j of row i. ``a_bar_flat`` is indexed by
    the row-major position; ``grid_x`` and ``b_bar`` are per cell.
    """
    x, a, b = _array(grid_x), _array(a_bar_flat), _array(b_bar)
    height, width = x.shape[0], x.shape[1]
    if a.shape[0] != height * width or b.shape[:2] != (height, width):
        raise ContractViolation("flat step factors do not match the grid extents")
    i, j = _check_location(location, height, width)
    t = linearize(i, j, width)

    previous_rows = 0.0
    for u in range(1, i):
        for v in range(1, width + 1):
            s = linearize(u, v, width)
            previous_rows = previous_rows + _span_product(a, s, t) * b[u - 1, v - 1] * x[u - 1, v - 1]

    current_row = 0.0
    for v in range(1, j + 1):
        s = linearize(i, v, width)
        current_row = current_row + _span_product(a, s, t) * b[i - 1, v - 1] * x[i - 1, v - 1]
    return np.asarray(previous_rows + current_row)
