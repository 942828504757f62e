"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"LSI1"  u32 version  u32 count
    count x { u16 name_len, name (UTF-8), u8 dtype, u8 rank, u32 dims[rank], payload }

Only dtype 0 (float32) is defined.  Payloads are C-ordered little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LSI1"
VERSION = 1
DTYPES = {0: np.dtype("<f4")}


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.array(tensors[name], dtype=DTYPES[0], order="C")  # keeps 0-d shapes
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"entry {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", 0, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("checkpoint is truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not an LSI checkpoint (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        dtype_code, rank = struct.unpack("<BB", take(2))
        if dtype_code not in DTYPES:
            raise CheckpointError(f"entry {name!r}: unknown dtype code {dtype_code}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        dtype = DTYPES[dtype_code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        out[name] = np.frombuffer(bytes(take(size)), dtype=dtype).reshape(dims).copy()
    if pos != len(view):
        raise CheckpointError("trailing bytes after the last entry")
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
