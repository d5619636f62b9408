"""
Synthetic spatially structured bags.

A coarse grid of patch vectors (smooth class-agnostic field, optional
positive cluster) is turned into half-stride overlapping tokens: every fine
cell averages the tissue coarse cells it overlaps and receives fresh noise.
Instance labels are stored for diagnostics only; models never read them.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.ndimage import uniform_filter

from src.constants.common_constants import BagSpecDefaults, Splits
from src.errors import ContractViolation
from src.scanning.grid import GridIndex, overlap_positions, overlapped_coarse
from src.settings import read_settings_file

logger = logging.getLogger(__name__)


class BagSpec(BaseModel):
    """Geometry and signal parameters shared by every bag of a dataset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    height: int = Field(default=BagSpecDefaults.HEIGHT, ge=1, le=32768)
    width: int = Field(default=BagSpecDefaults.WIDTH, ge=1, le=32768)
    feature_dim: int = Field(default=BagSpecDefaults.FEATURE_DIM, ge=1, le=65535)
    tissue_fraction: float = BagSpecDefaults.TISSUE_FRACTION
    cluster_radius: float = Field(default=BagSpecDefaults.CLUSTER_RADIUS, ge=0.0)
    signal_strength: float = Field(default=BagSpecDefaults.SIGNAL_STRENGTH, ge=0.0)
    noise_scale: float = BagSpecDefaults.NOISE_SCALE
    k_classes: int = Field(default=BagSpecDefaults.K_CLASSES, ge=2)
    test_fraction: float = Field(default=BagSpecDefaults.TEST_FRACTION, ge=0.0, le=1.0)

    @field_validator("tissue_fraction")
    @classmethod
    def _tissue_in_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"tissue_fraction must lie in (0, 1], got {value}")
        return value

    @field_validator("noise_scale")
    @classmethod
    def _noise_positive(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError(f"noise_scale must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _fine_grid_fits_format(self) -> "BagSpec":
        if 2 * self.height - 1 > 0xFFFF or 2 * self.width - 1 > 0xFFFF:
            raise ValueError("overlapping grid extents must fit in 16 bits")
        return self

    @classmethod
    def build(cls, **values) -> "BagSpec":
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ContractViolation(f"invalid bag spec: {exc}") from None

    @classmethod
    def from_file(cls, path) -> "BagSpec":
        """Flat ``key = value`` file; an empty file gives the defaults."""
        return cls.build(**read_settings_file(path))


@dataclass
class CoarseLayout:
    """Patch-level ground truth a bag is rendered from."""

    tissue: np.ndarray  # [H, W] bool
    vectors: np.ndarray  # [H, W, D]
    labels: np.ndarray  # [H, W] uint8
    center: Optional[tuple] = None


@dataclass
class Bag:
    bag_id: str
    label: int
    features: np.ndarray  # [N, D] float64, overlapping tokens in row-major order
    index: GridIndex  # fine (2H-1) x (2W-1) grid
    instance_labels: np.ndarray  # [N] uint8
    coarse: Optional[CoarseLayout] = field(default=None, compare=False, repr=False)

    @property
    def coords(self) -> np.ndarray:
        return self.index.coords

    @property
    def size(self) -> int:
        return self.features.shape[0]


@lru_cache(maxsize=32)
def class_directions(feature_dim: int, k_classes: int) -> np.ndarray:
    """[k, D] fixed unit vectors; row c is the signal direction of class c (row 0 unused)."""
    rng = np.random.default_rng(BagSpecDefaults.DIRECTION_SEED)
    directions = rng.standard_normal((k_classes, feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    directions.setflags(write=False)
    return directions


def sample_tissue(height: int, width: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Connected tissue blob grown cell by cell from a random seed cell."""
    target = max(1, int(round(fraction * height * width)))
    tissue = np.zeros((height, width), dtype=bool)
    if target >= height * width:
        tissue[:] = True
        return tissue
    start = (int(rng.integers(height)), int(rng.integers(width)))
    tissue[start] = True
    frontier = set()

    def extend_frontier(cell):
        r, c = cell
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and not tissue[nr, nc]:
                frontier.add((nr, nc))

    extend_frontier(start)
    grown = 1
    while grown < target:
        candidates = sorted(frontier)
        cell = candidates[int(rng.integers(len(candidates)))]
        frontier.discard(cell)
        tissue[cell] = True
        grown += 1
        extend_frontier(cell)
    return tissue


def build_coarse_layout(spec: BagSpec, label: int, rng: np.random.Generator) -> CoarseLayout:
    if not 0 <= label < spec.k_classes:
        raise ContractViolation(f"class {label} outside 0..{spec.k_classes - 1}")
    tissue = sample_tissue(spec.height, spec.width, spec.tissue_fraction, rng)
    if not tissue.any():
        raise ContractViolation("no tissue cell available")

    base = rng.standard_normal((spec.height, spec.width, spec.feature_dim))
    vectors = uniform_filter(base, size=(3, 3, 1), mode="nearest")
    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    center = None
    if label > 0:
        tissue_cells = np.argwhere(tissue)
        center = tuple(int(v) for v in tissue_cells[int(rng.integers(len(tissue_cells)))])
        rows, cols = np.indices((spec.height, spec.width))
        distance = np.hypot(rows - center[0], cols - center[1])
        cluster = tissue & (distance <= spec.cluster_radius)
        vectors[cluster] += spec.signal_strength * class_directions(spec.feature_dim, spec.k_classes)[label]
        labels[cluster] = label
    return CoarseLayout(tissue=tissue, vectors=vectors, labels=labels, center=center)


def overlap_features(layout: CoarseLayout, noise_scale: float, rng: np.random.Generator):
    """
    Fine grid, token features and instance labels: each fine cell is the mean
    of the tissue coarse cells it overlaps plus N(0, noise_scale^2) noise, and
    is positive when any of those cells is.
    """
    height, width, dim = layout.vectors.shape
    fine = overlap_positions(height, width, layout.tissue)
    row_lo, row_hi = overlapped_coarse(fine.height)
    col_lo, col_hi = overlapped_coarse(fine.width)

    total = np.zeros((fine.height, fine.width, dim))
    count = np.zeros((fine.height, fine.width))
    positive = np.zeros((fine.height, fine.width), dtype=np.uint8)
    for rows, row_new in ((row_lo, np.ones_like(row_lo, dtype=bool)), (row_hi, row_hi != row_lo)):
        for cols, col_new in ((col_lo, np.ones_like(col_lo, dtype=bool)), (col_hi, col_hi != col_lo)):
            # each distinct overlapped coarse cell contributes once
            take = row_new[:, None] & col_new[None, :] & layout.tissue[np.ix_(rows, cols)]
            total += take[..., None] * layout.vectors[np.ix_(rows, cols)]
            count += take
            positive = np.maximum(positive, np.where(take, layout.labels[np.ix_(rows, cols)], 0))

    coords = fine.coords
    rows, cols = coords[:, 0], coords[:, 1]
    means = total[rows, cols] / count[rows, cols][:, None]
    noise = rng.standard_normal(means.shape)
    return fine, means + noise_scale * noise, positive[rows, cols].astype(np.uint8)


def generate_bag(spec: BagSpec, label: int, rng: np.random.Generator, bag_id: str = "bag") -> Bag:
    layout = build_coarse_layout(spec, label, rng)
    fine, features, instance_labels = overlap_features(layout, spec.noise_scale, rng)
    if (label == 0) != (int(instance_labels.sum()) == 0):
        raise ContractViolation(f"bag {bag_id}: label {label} disagrees with its instance labels")
    logger.debug("Generated %s: label %d, %d tokens", bag_id, label, features.shape[0])
    return Bag(
        bag_id=bag_id,
        label=label,
        features=features,
        index=fine,
        instance_labels=instance_labels,
        coarse=layout,
    )


def split_for(seed: int, bag_id: str, test_fraction: float) -> str:
    """Test when the first 8 bytes of sha256("<seed>:<bag_id>"), read as a fraction of 2^64, fall below test_fraction."""
    digest = hashlib.sha256(f"{seed}:{bag_id}".encode("utf-8")).digest()
    position = int.from_bytes(digest[:8], "big") / float(1 << 64)
    return Splits.TEST if position < test_fraction else Splits.TRAIN


@dataclass
class Dataset:
    spec: BagSpec
    seed: int
    bags: List[Bag]
    splits: Dict[str, str]

    def split(self, name: str) -> List[Bag]:
        if name not in Splits.ALL:
            raise ContractViolation(f"Unknown split {name!r}; expected one of {Splits.ALL}")
        return [bag for bag in self.bags if self.splits[bag.bag_id] == name]

    def bag(self, bag_id: str) -> Bag:
        for bag in self.bags:
            if bag.bag_id == bag_id:
                return bag
        raise ContractViolation(f"Unknown bag {bag_id!r}")


def generate_dataset(spec: BagSpec, n_per_class: int, seed: int) -> Dataset:
    """``n_per_class`` bags of every class, classes interleaved, one derived seed per bag."""
    if n_per_class < 1:
        raise ContractViolation(f"n per class must be >= 1, got {n_per_class}")
    total = n_per_class * spec.k_classes
    children = np.random.SeedSequence(seed).spawn(total)
    bags: List[Bag] = []
    splits: Dict[str, str] = {}
    for position, child in enumerate(children):
        label = position % spec.k_classes
        bag_id = f"bag-{position:05d}"
        bag = generate_bag(spec, label, np.random.default_rng(child), bag_id=bag_id)
        bags.append(bag)
        splits[bag_id] = split_for(seed, bag_id, spec.test_fraction)
    test = sum(1 for s in splits.values() if s == Splits.TEST)
    logger.info("Generated %d bags (%d train, %d test) with seed %d", total, total - test, test, seed)
    return Dataset(spec=spec, seed=seed, bags=bags, splits=splits)
