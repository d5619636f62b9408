"""
Dataset directory codec.

A dataset is one directory holding ``manifest.json`` and one ``.ssmb`` file
per bag. Bag file layout (little endian): magic ``SSMB``, version byte, fine
grid height u16, width u16, feature dim u16, valid count u32, then
(row u16, col u16) per valid cell in row-major order, features f64
[count x D], instance labels u8 per cell.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from src.constants.common_constants import FileFormats, Splits
from src.data.synthetic import Bag, BagSpec, Dataset
from src.errors import ContractViolation, DataFormatError
from src.scanning.grid import GridIndex

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_HEADER = struct.Struct("<HHHI")


def serialize_bag(bag: Bag) -> bytes:
    index = bag.index
    dim = bag.features.shape[1]
    if index.height > 0xFFFF or index.width > 0xFFFF or dim > 0xFFFF:
        raise ContractViolation(f"bag {bag.bag_id} exceeds 16-bit extents")
    coords = index.coords
    if coords.shape[0] != bag.features.shape[0]:
        raise ContractViolation(
            f"bag {bag.bag_id}: {bag.features.shape[0]} feature rows for {coords.shape[0]} valid cells"
        )
    return b"".join(
        [
            FileFormats.BAG_MAGIC,
            struct.pack("<B", FileFormats.BAG_VERSION),
            _HEADER.pack(index.height, index.width, dim, coords.shape[0]),
            coords.astype("<u2").tobytes(order="C"),
            np.ascontiguousarray(bag.features, dtype="<f8").tobytes(order="C"),
            np.asarray(bag.instance_labels, dtype=np.uint8).tobytes(),
        ]
    )


def deserialize_bag(blob: bytes, bag_id: str, label: int, path: str = "<memory>") -> Bag:
    """Parse one bag file; malformed input raises ``DataFormatError`` with the byte offset."""
    offset = 0

    def take(size: int, what: str) -> bytes:
        nonlocal offset
        if offset + size > len(blob):
            raise DataFormatError(f"truncated {what}", offset=offset, path=path)
        chunk = blob[offset : offset + size]
        offset += size
        return chunk

    if take(len(FileFormats.BAG_MAGIC), "magic") != FileFormats.BAG_MAGIC:
        raise DataFormatError("bad bag magic", offset=0, path=path)
    version_offset = offset
    (version,) = struct.unpack("<B", take(1, "version"))
    if version != FileFormats.BAG_VERSION:
        raise DataFormatError(f"unsupported bag version {version}", offset=version_offset, path=path)
    header_offset = offset
    height, width, dim, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if height < 1 or width < 1 or dim < 1:
        raise DataFormatError(
            f"invalid extents {height}x{width}x{dim}", offset=header_offset, path=path
        )
    if count > height * width:
        raise DataFormatError(
            f"valid count {count} exceeds a {height}x{width} grid", offset=header_offset, path=path
        )

    coords_offset = offset
    coords = np.frombuffer(take(4 * count, "coordinates"), dtype="<u2").reshape(count, 2).astype(np.int64)
    if count:
        if coords[:, 0].max() >= height or coords[:, 1].max() >= width:
            raise DataFormatError("coordinate outside grid extents", offset=coords_offset, path=path)
        linear = coords[:, 0] * width + coords[:, 1]
        if np.any(np.diff(linear) <= 0):
            raise DataFormatError(
                "coordinates are not strictly increasing in row-major order",
                offset=coords_offset,
                path=path,
            )
    features = np.frombuffer(take(8 * count * dim, "features"), dtype="<f8")
    features = features.astype(np.float64).reshape(count, dim)
    labels_offset = offset
    instance_labels = np.frombuffer(take(count, "instance labels"), dtype=np.uint8).copy()
    if offset != len(blob):
        raise DataFormatError(f"{len(blob) - offset} trailing bytes", offset=offset, path=path)
    if not np.isfinite(features).all():
        raise DataFormatError("non-finite feature value", offset=coords_offset + 4 * count, path=path)
    if (label == 0) != (int(instance_labels.sum()) == 0):
        raise DataFormatError(
            f"bag label {label} disagrees with its instance labels", offset=labels_offset, path=path
        )

    valid = np.zeros((height, width), dtype=bool)
    valid[coords[:, 0], coords[:, 1]] = True
    return Bag(
        bag_id=bag_id,
        label=label,
        features=features,
        index=GridIndex(height, width, valid),
        instance_labels=instance_labels,
    )


def manifest_text(dataset: Dataset) -> str:
    entries = [
        {
            "id": bag.bag_id,
            "label": bag.label,
            "split": dataset.splits[bag.bag_id],
            "file": f"{bag.bag_id}{FileFormats.BAG_SUFFIX}",
        }
        for bag in dataset.bags
    ]
    manifest = {"spec": dataset.spec.model_dump(), "seed": dataset.seed, "bags": entries}
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def save_dataset(dataset: Dataset, directory: PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for bag in dataset.bags:
        (directory / f"{bag.bag_id}{FileFormats.BAG_SUFFIX}").write_bytes(serialize_bag(bag))
    (directory / FileFormats.MANIFEST_NAME).write_text(manifest_text(dataset), encoding="utf-8")
    logger.info("Wrote %d bags to %s", len(dataset.bags), directory)
    return directory


def _manifest_field(entry: dict, key: str, kind: type, manifest_path: Path):
    value = entry.get(key) if isinstance(entry, dict) else None
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataFormatError(f"manifest bag entry lacks a valid {key!r}", path=str(manifest_path))
    return value


def load_dataset(directory: PathLike) -> Dataset:
    """Read a dataset directory completely; any failure leaves nothing half-loaded."""
    directory = Path(directory)
    manifest_path = directory / FileFormats.MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if not isinstance(manifest, dict) or not {"spec", "seed", "bags"} <= set(manifest):
        raise DataFormatError("manifest must hold spec, seed and bags", path=str(manifest_path))
    try:
        spec = BagSpec(**manifest["spec"])
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid spec in manifest: {exc}", path=str(manifest_path)) from None
    seed = manifest["seed"]
    if not isinstance(seed, int):
        raise DataFormatError("manifest seed must be an integer", path=str(manifest_path))
    if not isinstance(manifest["bags"], list):
        raise DataFormatError("manifest bags must be a list", path=str(manifest_path))

    bags: List[Bag] = []
    splits: Dict[str, str] = {}
    for entry in manifest["bags"]:
        bag_id = _manifest_field(entry, "id", str, manifest_path)
        label = _manifest_field(entry, "label", int, manifest_path)
        split = _manifest_field(entry, "split", str, manifest_path)
        file_name = _manifest_field(entry, "file", str, manifest_path)
        if bag_id in splits:
            raise DataFormatError(f"duplicate bag id {bag_id!r}", path=str(manifest_path))
        if split not in Splits.ALL or not 0 <= label < spec.k_classes:
            raise DataFormatError(f"bag {bag_id!r} has an invalid split or label", path=str(manifest_path))
        bag_path = directory / file_name
        bag = deserialize_bag(bag_path.read_bytes(), bag_id, label, path=str(bag_path))
        if bag.features.shape[1] != spec.feature_dim:
            raise DataFormatError(
                f"feature dim {bag.features.shape[1]} differs from spec {spec.feature_dim}",
                offset=len(FileFormats.BAG_MAGIC) + 1,
                path=str(bag_path),
            )
        bags.append(bag)
        splits[bag_id] = split
    logger.info("Loaded %d bags from %s", len(bags), directory)
    return Dataset(spec=spec, seed=seed, bags=bags, splits=splits)
