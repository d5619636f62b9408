"""
Parameter checkpoint codec.

Layout: magic ``SSMP``, version byte, then until end of file one record per
named parameter: name length (u16 LE), UTF-8 name, rank (u8), extents (u32 LE
each), values (f64 LE, row-major).
"""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Union

import numpy as np
import torch

from src.constants.common_constants import FileFormats, NumericDefaults
from src.errors import DataFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def encode_parameters(params: Mapping[str, torch.Tensor]) -> bytes:
    chunks = [FileFormats.CHECKPOINT_MAGIC, struct.pack("<B", FileFormats.CHECKPOINT_VERSION)]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"Parameter name too long: {name[:32]}...")
        values = tensor.detach().cpu().to(NumericDefaults.DTYPE).contiguous().numpy()
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.astype("<f8", copy=False).tobytes(order="C"))
    return b"".join(chunks)


def decode_parameters(blob: bytes, path: str = "<memory>") -> "OrderedDict[str, torch.Tensor]":
    """Parse a checkpoint; any malformed field raises ``DataFormatError`` with its byte offset."""
    magic = FileFormats.CHECKPOINT_MAGIC
    if blob[: len(magic)] != magic:
        raise DataFormatError("bad checkpoint magic", offset=0, path=path)
    offset = len(magic)
    if len(blob) < offset + 1:
        raise DataFormatError("missing version byte", offset=offset, path=path)
    version = blob[offset]
    if version != FileFormats.CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", offset=offset, path=path)
    offset += 1

    params: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    while offset < len(blob):

        def take(size: int, what: str) -> bytes:
            nonlocal offset
            if offset + size > len(blob):
                raise DataFormatError(f"truncated {what}", offset=offset, path=path)
            chunk = blob[offset : offset + size]
            offset += size
            return chunk

        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name_offset = offset
        try:
            name = take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError("parameter name is not UTF-8", offset=name_offset, path=path) from None
        if name in params:
            raise DataFormatError(f"duplicate parameter {name!r}", offset=name_offset, path=path)
        (rank,) = struct.unpack("<B", take(1, "rank"))
        extents = struct.unpack(f"<{rank}I", take(4 * rank, "extents"))
        count = int(np.prod(extents, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(8 * count, f"values of {name!r}"), dtype="<f8")
        params[name] = torch.from_numpy(values.astype(np.float64).reshape(extents))
    return params


def save_checkpoint(params: Mapping[str, torch.Tensor], path: PathLike) -> None:
    path = Path(path)
    path.write_bytes(encode_parameters(params))
    logger.info("Wrote %d parameters to %s", len(params), path)


def load_checkpoint(path: PathLike) -> "OrderedDict[str, torch.Tensor]":
    path = Path(path)
    params = decode_parameters(path.read_bytes(), path=str(path))
    logger.info("Loaded %d parameters from %s", len(params), path)
    return params
