from src.scanning.grid import (
    GridIndex,
    coarse_positions,
    flatten,
    overlap_positions,
    overlapped_coarse,
    pad_to_rectangle,
    tissue_ratio,
)

__all__ = [
    "GridIndex",
    "coarse_positions",
    "flatten",
    "overlap_positions",
    "overlapped_coarse",
    "pad_to_rectangle",
    "tissue_ratio",
]
