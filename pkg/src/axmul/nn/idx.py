"""Reader/writer for the IDX files MNIST ships in (gzip-compressed or raw)."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
# Upper bound on any single extent; guards against garbage headers.
MAX_EXTENT = 1 << 24


class IdxError(ValueError):
    pass


def _read(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _parse(data: bytes, magic: int, rank: int) -> np.ndarray:
    header = 4 + 4 * rank
    if len(data) < header:
        raise IdxError("file too short for IDX header")
    (got,) = struct.unpack(">I", data[:4])
    if got != magic:
        raise IdxError(f"bad magic {got:#010x}, expected {magic:#010x}")
    dims = struct.unpack(f">{rank}I", data[4:header])
    if any(d > MAX_EXTENT for d in dims):
        raise IdxError(f"dimension overflow in header: {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - header != count:
        raise IdxError(f"header promises {count} bytes of data, file has {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx_images(path) -> np.ndarray:
    """Images as float32 N x 1 x H x W, scaled to [0, 1]."""
    raw = _parse(_read(path), IMAGE_MAGIC, 3)
    return (raw.astype(np.float32) / np.float32(255.0))[:, None, :, :]


def load_idx_labels(path) -> np.ndarray:
    raw = _parse(_read(path), LABEL_MAGIC, 1)
    if raw.size and raw.max() > 9:
        raise IdxError(f"label {raw.max()} outside 0..9")
    return raw.astype(np.int64)


def write_idx_images(images: np.ndarray, path, compress: bool | None = None):
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    _write(struct.pack(">IIII", IMAGE_MAGIC, n, h, w) + images.tobytes(), path, compress)


def write_idx_labels(labels: np.ndarray, path, compress: bool | None = None):
    labels = np.asarray(labels, dtype=np.uint8)
    _write(struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes(), path, compress)


def _write(data: bytes, path, compress):
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    if compress:
        # mtime=0 keeps the output byte-reproducible
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"{data_dir / stem}[.gz] not found")


def load_mnist(data_dir, split: str = "train"):
    """(images, labels) from a directory holding the standard MNIST file names."""
    data_dir = Path(data_dir)
    if split == "train":
        stems = (TRAIN_IMAGES, TRAIN_LABELS)
    elif split == "test":
        stems = (TEST_IMAGES, TEST_LABELS)
    else:
        raise ValueError(f"unknown split {split!r}")
    images = load_idx_images(_find(data_dir, stems[0]))
    labels = load_idx_labels(_find(data_dir, stems[1]))
    if len(images) != len(labels):
        raise IdxError(f"{len(images)} images but {len(labels)} labels")
    return images, labels
