"""
Grid indexing and sequence construction.

Coordinates are 0-based (row, col) throughout; ``src.ssm.oracles.linearize``
gives the 1-based row-major position used in the unrolled recurrences.
Blank cells never enter the token sequence; they only exist inside the padded
rectangle.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import torch

from src.errors import ContractViolation

logger = logging.getLogger(__name__)

Array = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Extents of a grid and which of its cells hold tissue."""

    height: int
    width: int
    valid: np.ndarray  # [H, W] bool

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ContractViolation(f"grid extents must be positive, got {self.height}x{self.width}")
        valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != (self.height, self.width):
            raise ContractViolation(
                f"validity map {valid.shape} does not match extents {(self.height, self.width)}"
            )
        object.__setattr__(self, "valid", valid)

    @classmethod
    def full(cls, height: int, width: int) -> "GridIndex":
        return cls(height, width, np.ones((height, width), dtype=bool))

    @property
    def coords(self) -> np.ndarray:
        """[N, 2] (row, col) of valid cells in ascending row-major order."""
        rows, cols = np.nonzero(self.valid)
        return np.stack([rows, cols], axis=1).astype(np.int64)

    @property
    def count(self) -> int:
        return int(self.valid.sum())

    def flat_positions(self) -> np.ndarray:
        """1-based row-major position of every valid cell."""
        coords = self.coords
        return coords[:, 0] * self.width + coords[:, 1] + 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridIndex):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.valid, other.valid)
        )


def overlapped_coarse(fine_extent: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    For each fine position along one axis, the lower and upper coarse index it
    overlaps. Even fine positions sit on a coarse cell (lower == upper); odd
    positions straddle two.
    """
    fine = np.arange(fine_extent)
    return fine // 2, (fine + 1) // 2


def overlap_positions(
    height: int, width: int, coarse_valid: Union[np.ndarray, None] = None
) -> GridIndex:
    """
    Half-stride overlapping positions of a coarse ``height`` x ``width`` grid:
    (2H-1) x (2W-1) fine cells, each valid when any coarse cell it overlaps is.
    """
    if height < 1 or width < 1:
        raise ContractViolation(f"coarse extents must be positive, got {height}x{width}")
    if coarse_valid is None:
        coarse_valid = np.ones((height, width), dtype=bool)
    coarse_valid = np.asarray(coarse_valid, dtype=bool)
    if coarse_valid.shape != (height, width):
        raise ContractViolation(
            f"coarse validity {coarse_valid.shape} does not match extents {(height, width)}"
        )
    row_lo, row_hi = overlapped_coarse(2 * height - 1)
    col_lo, col_hi = overlapped_coarse(2 * width - 1)
    fine_valid = (
        coarse_valid[np.ix_(row_lo, col_lo)]
        | coarse_valid[np.ix_(row_lo, col_hi)]
        | coarse_valid[np.ix_(row_hi, col_lo)]
        | coarse_valid[np.ix_(row_hi, col_hi)]
    )
    return GridIndex(2 * height - 1, 2 * width - 1, fine_valid)


def flatten(grid: Array, index: GridIndex) -> Tuple[Array, np.ndarray]:
    """Valid cells of ``grid`` [H, W, D] in row-major order, plus their coordinates."""
    if tuple(grid.shape[:2]) != (index.height, index.width):
        raise ContractViolation(
            f"grid extents {tuple(grid.shape[:2])} do not match index {(index.height, index.width)}"
        )
    back_map = index.coords
    if isinstance(grid, torch.Tensor):
        rows = torch.from_numpy(back_map[:, 0])
        cols = torch.from_numpy(back_map[:, 1])
        return grid[rows, cols], back_map
    return grid[back_map[:, 0], back_map[:, 1]], back_map


def _check_back_map(back_map: np.ndarray, height: int, width: int) -> np.ndarray:
    back_map = np.asarray(back_map, dtype=np.int64).reshape(-1, 2)
    if back_map.size and (
        back_map[:, 0].min() < 0
        or back_map[:, 0].max() >= height
        or back_map[:, 1].min() < 0
        or back_map[:, 1].max() >= width
    ):
        raise ContractViolation(f"coordinates fall outside a {height}x{width} grid")
    linear = back_map[:, 0] * width + back_map[:, 1]
    if np.unique(linear).size != linear.size:
        raise ContractViolation("duplicate coordinate in back map")
    return back_map


def pad_to_rectangle(
    sequence: Array, back_map: np.ndarray, height: int, width: int
) -> Tuple[Array, np.ndarray]:
    """
    Scatter tokens back onto a zero-filled [H, W, D] rectangle; the returned
    cell mask marks the cells that received a token.
    """
    back_map = _check_back_map(back_map, height, width)
    if sequence.shape[0] != back_map.shape[0]:
        raise ContractViolation(
            f"{sequence.shape[0]} tokens but {back_map.shape[0]} coordinates"
        )
    cell_mask = np.zeros((height, width), dtype=bool)
    cell_mask[back_map[:, 0], back_map[:, 1]] = True
    tail = tuple(sequence.shape[1:])
    if isinstance(sequence, torch.Tensor):
        grid = sequence.new_zeros((height, width) + tail)
        rows = torch.from_numpy(back_map[:, 0])
        cols = torch.from_numpy(back_map[:, 1])
        grid = grid.index_put((rows, cols), sequence)
        return grid, cell_mask
    grid = np.zeros((height, width) + tail, dtype=np.asarray(sequence).dtype)
    grid[back_map[:, 0], back_map[:, 1]] = sequence
    return grid, cell_mask


def tissue_ratio(index: GridIndex) -> float:
    """Fraction of cells in the rectangle that hold tissue."""
    return index.count / float(index.height * index.width)


def coarse_positions(fine: GridIndex) -> Tuple[np.ndarray, GridIndex]:
    """
    Tokens of a fine overlapping grid that sit exactly on coarse cells, and the
    coarse grid they form. Returns the token positions within the fine sequence.
    """
    if fine.height % 2 == 0 or fine.width % 2 == 0:
        raise ContractViolation(
            f"{fine.height}x{fine.width} is not an overlapping grid of odd extents"
        )
    coords = fine.coords
    on_coarse = (coords[:, 0] % 2 == 0) & (coords[:, 1] % 2 == 0)
    coarse_valid = fine.valid[::2, ::2]
    return np.nonzero(on_coarse)[0], GridIndex((fine.height + 1) // 2, (fine.width + 1) // 2, coarse_valid)
