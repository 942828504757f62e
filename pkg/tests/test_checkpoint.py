import hashlib
import struct

import numpy as np
import pytest

from lsi.checkpoint import MAGIC, CheckpointError, dumps, load, loads, save


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        tensors = {"a.w": rng.normal(size=(3, 4)).astype(np.float32), "b": np.float32(rng.normal(size=7)),
                   "scalar": np.array(2.5, dtype=np.float32)}
        save(tmp_path / "c.lsi", tensors)
        back = load(tmp_path / "c.lsi")
        assert set(back) == set(tensors)
        for k, v in tensors.items():
            assert back[k].shape == v.shape
            assert hashlib.sha256(back[k].tobytes()).digest() == hashlib.sha256(v.tobytes()).digest()

    def test_float64_stored_as_float32(self):
        back = loads(dumps({"x": np.array([0.1])}))
        assert back["x"].dtype == np.float32 and back["x"][0] == np.float32(0.1)

    def test_header_layout(self):
        blob = dumps({"ab": np.zeros((2, 3), dtype=np.float32)})
        assert blob[:4] == MAGIC
        assert struct.unpack("<II", blob[4:12]) == (1, 1)
        assert struct.unpack("<H", blob[12:14]) == (2,) and blob[14:16] == b"ab"
        assert struct.unpack("<BB", blob[16:18]) == (0, 2)
        assert struct.unpack("<II", blob[18:26]) == (2, 3)
        assert len(blob) == 26 + 6 * 4

    def test_unicode_name(self):
        assert list(loads(dumps({"poids.é": np.ones(1)}))) == ["poids.é"]

    def test_deterministic_bytes(self, rng):
        t = {"z": rng.normal(size=5), "a": rng.normal(size=2)}
        assert dumps(t) == dumps(dict(reversed(list(t.items()))))

    def test_unknown_version(self):
        blob = bytearray(dumps({"x": np.ones(2)}))
        blob[4:8] = struct.pack("<I", 2)
        with pytest.raises(CheckpointError, match="version"):
            loads(bytes(blob))

    def test_bad_magic(self):
        with pytest.raises(CheckpointError):
            loads(b"NOPE" + bytes(8))

    def test_truncated(self):
        with pytest.raises(CheckpointError):
            loads(dumps({"x": np.ones(4)})[:-3])

    def test_unknown_dtype(self):
        blob = bytearray(dumps({"x": np.ones(1)}))
        blob[15] = 7  # dtype byte follows the one-byte name
        with pytest.raises(CheckpointError, match="dtype"):
            loads(bytes(blob))
