"""Unit tests for the SSMP parameter checkpoint codec."""

import struct
from collections import OrderedDict

import pytest
import torch

from src.errors import DataFormatError
from src.tensor.checkpoint import decode_parameters, encode_parameters, load_checkpoint, save_checkpoint


@pytest.fixture
def params():
    gen = torch.Generator().manual_seed(3)
    return OrderedDict(
        [
            ("embed.weight", torch.randn(4, 3, generator=gen, dtype=torch.float64)),
            ("embed.bias", torch.randn(4, generator=gen, dtype=torch.float64)),
            ("scalar", torch.tensor(2.5, dtype=torch.float64)),
            ("blocks.0.ssm.a_log", torch.randn(2, 1, 5, generator=gen, dtype=torch.float64)),
        ]
    )


class TestLayout:
    def test_header_and_first_record(self, params):
        blob = encode_parameters(params)
        assert blob[:4] == b"SSMP"
        assert blob[4] == 1
        (name_len,) = struct.unpack("<H", blob[5:7])
        assert blob[7 : 7 + name_len] == b"embed.weight"
        assert blob[7 + name_len] == 2
        assert struct.unpack("<2I", blob[8 + name_len : 16 + name_len]) == (4, 3)

    def test_scalar_has_rank_zero(self):
        blob = encode_parameters({"s": torch.tensor(1.0, dtype=torch.float64)})
        assert blob == b"SSMP\x01" + struct.pack("<H", 1) + b"s" + b"\x00" + struct.pack("<d", 1.0)


class TestRoundTrip:
    def test_values_and_bytes_survive(self, params, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert list(loaded) == list(params)
        for name in params:
            assert torch.equal(loaded[name], params[name])
        assert encode_parameters(loaded) == path.read_bytes()

    def test_random_shapes(self):
        gen = torch.Generator().manual_seed(9)
        for trial in range(20):
            rank = int(torch.randint(0, 4, (1,), generator=gen))
            shape = tuple(int(v) for v in torch.randint(1, 5, (rank,), generator=gen))
            original = {f"p{trial}": torch.randn(shape, generator=gen, dtype=torch.float64)}
            blob = encode_parameters(original)
            assert encode_parameters(decode_parameters(blob)) == blob


class TestCorruption:
    def test_bad_magic(self, params):
        blob = b"XXXX" + encode_parameters(params)[4:]
        with pytest.raises(DataFormatError, match="magic.*offset 0"):
            decode_parameters(blob)

    def test_bad_version(self, params):
        blob = bytearray(encode_parameters(params))
        blob[4] = 7
        with pytest.raises(DataFormatError, match="version 7") as info:
            decode_parameters(bytes(blob))
        assert info.value.offset == 4

    def test_truncated_values(self, params):
        blob = encode_parameters(params)
        with pytest.raises(DataFormatError, match="truncated") as info:
            decode_parameters(blob[:-3], path="cut.ckpt")
        assert info.value.path == "cut.ckpt"
        assert info.value.offset is not None

    def test_duplicate_name(self):
        one = encode_parameters({"w": torch.zeros(1, dtype=torch.float64)})
        with pytest.raises(DataFormatError, match="duplicate"):
            decode_parameters(one + one[5:])
