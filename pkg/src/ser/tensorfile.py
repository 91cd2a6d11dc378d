"""SERT tensor files: ``SERT`` | version u32 | ndim u32 | dims u32*ndim | f32 LE payload."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

SERT_MAGIC = b"SERT"
SERT_VERSION = 1


class TensorFileError(ValueError):
    pass


def pack_tensor(array) -> bytes:
    a = np.ascontiguousarray(array, dtype="<f4")
    head = SERT_MAGIC + struct.pack("<II", SERT_VERSION, a.ndim)
    head += struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes()


def unpack_tensor(data: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one SERT block starting at ``offset``; return (array, next offset)."""
    if data[offset : offset + 4] != SERT_MAGIC:
        raise TensorFileError("bad SERT magic")
    if len(data) < offset + 12:
        raise TensorFileError("truncated SERT header")
    version, ndim = struct.unpack_from("<II", data, offset + 4)
    if version != SERT_VERSION:
        raise TensorFileError(f"unsupported SERT version {version}")
    pos = offset + 12
    if len(data) < pos + 4 * ndim:
        raise TensorFileError("truncated SERT dims")
    dims = struct.unpack_from(f"<{ndim}I", data, pos)
    pos += 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    end = pos + 4 * count
    if len(data) < end:
        raise TensorFileError("truncated SERT payload")
    arr = np.frombuffer(data[pos:end], dtype="<f4").reshape(dims).astype(np.float32)
    return arr, end


def save_tensor(path: str | Path, array) -> None:
    Path(path).write_bytes(pack_tensor(array))


def load_tensor(path: str | Path) -> np.ndarray:
    arr, _ = unpack_tensor(Path(path).read_bytes())
    return arr
