"""AXTF named-tensor archive.

Layout (little-endian): magic ``AXTF``, u32 version (1), u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 dtype (0x01 = binary32),
u8 rank, u32 extents, raw binary32 data in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AXTF"
VERSION = 1
DTYPE_F32 = 0x01


class ArchiveError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 255:
            raise ArchiveError(f"tensor {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ArchiveError(f"truncated archive: need {n} bytes at offset {pos}, have {len(data) - pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise ArchiveError("bad magic: not an AXTF archive")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise ArchiveError("tensor name is not valid UTF-8") from None
        dtype, rank = struct.unpack("<BB", take(2))
        if dtype != DTYPE_F32:
            raise ArchiveError(f"tensor {name!r}: unsupported dtype byte {dtype:#04x}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        if name in out:
            raise ArchiveError(f"duplicate tensor name {name!r}")
        out[name] = arr.astype(np.float32)
    if pos != len(data):
        raise ArchiveError(f"{len(data) - pos} trailing bytes after last tensor")
    return out


def save_tensors(tensors: dict[str, np.ndarray], path):
    Path(path).write_bytes(dumps(tensors))


def load_tensors(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def save_weights(weights: dict[str, np.ndarray], path, model=None):
    if model is not None:
        check_weights(weights, model)
    save_tensors(weights, path)


def load_weights(path, model=None) -> dict[str, np.ndarray]:
    weights = load_tensors(path)
    if model is not None:
        check_weights(weights, model)
    return weights


def check_weights(weights: dict, model):
    expected = model.param_shapes()
    if set(weights) != set(expected):
        missing = sorted(set(expected) - set(weights))
        extra = sorted(set(weights) - set(expected))
        raise ArchiveError(f"weights do not match model: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != shape:
            raise ArchiveError(f"{name}: shape {tuple(weights[name].shape)} != expected {shape}")
