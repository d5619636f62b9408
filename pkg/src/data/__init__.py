from src.data.storage import deserialize_bag, load_dataset, save_dataset, serialize_bag
from src.data.synthetic import (
    Bag,
    BagSpec,
    CoarseLayout,
    Dataset,
    build_coarse_layout,
    class_directions,
    generate_bag,
    generate_dataset,
    overlap_features,
    sample_tissue,
    split_for,
)

__all__ = [
    "Bag",
    "BagSpec",
    "CoarseLayout",
    "Dataset",
    "build_coarse_layout",
    "class_directions",
    "deserialize_bag",
    "generate_bag",
    "generate_dataset",
    "load_dataset",
    "overlap_features",
    "sample_tissue",
    "save_dataset",
    "serialize_bag",
    "split_for",
]
