"""TSUPW1: a minimal bit-exact named-tensor container.

Layout: magic b"TSUPW1\\n", then a uint32-LE tensor count, then per tensor a
uint16-LE name length, the UTF-8 name, a uint8 ndim, each dim as uint32-LE,
and the payload as row-major float32-LE.  No padding, no compression.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TSUPW1\n"


class WeightFormatError(ValueError):
    pass


def write_tsupw1(path, tensors: dict[str, np.ndarray]) -> None:
    """Serialize tensors (float64 values are truncated to float32)."""
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype=np.float32)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise WeightFormatError(f"tensor name too long: {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def read_tsupw1(path) -> dict[str, np.ndarray]:
    """Load tensors, upcast to float64; strict about sizes and duplicate names."""
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise WeightFormatError(f"bad magic in {path}")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise WeightFormatError(f"truncated file {path} at byte {pos}")
        out = blob[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        if name in tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        raw = take(4 * size)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise WeightFormatError(f"{len(blob) - pos} trailing bytes in {path}")
    return tensors
