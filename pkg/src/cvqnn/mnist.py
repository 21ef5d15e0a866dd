"""IDX reader for MNIST-style image and label files (plain or gzipped)."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, InvalidLabelError, LengthError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
SIDE = 28


@dataclass(frozen=True)
class MnistSet:
    images: np.ndarray  # (n, 28, 28) in [0, 1]
    labels: np.ndarray  # (n,) digits

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise LengthError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 9):
            raise InvalidLabelError("labels must be digits 0-9")

    def __len__(self):
        return len(self.labels)

    def of_digit(self, digit: int) -> np.ndarray:
        return self.images[self.labels == digit]

    def subset(self, digits, per_digit: int, offset: int = 0) -> "MnistSet":
        """The samples ``offset..offset+per_digit`` of each listed digit, interleaved by index."""
        idx = []
        for d in digits:
            hits = np.flatnonzero(self.labels == d)[offset : offset + per_digit]
            if len(hits) < per_digit:
                raise LengthError(f"only {len(hits)} samples of digit {d} past offset {offset}")
            idx.append(hits)
        order = np.sort(np.concatenate(idx))
        return MnistSet(self.images[order], self.labels[order])


def _read(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _check_magic(data: bytes, want: int):
    if len(data) < 4:
        raise LengthError("file shorter than its magic number")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != want:
        raise FormatError(f"magic {magic}, expected {want}")


def parse_images(data: bytes) -> np.ndarray:
    _check_magic(data, IMAGE_MAGIC)
    if len(data) < 16:
        raise LengthError("image file shorter than its header")
    _, n, rows, cols = struct.unpack(">IIII", data[:16])
    if rows != SIDE or cols != SIDE:
        raise DimensionError(f"images are {rows}x{cols}, expected {SIDE}x{SIDE}")
    need = 16 + n * rows * cols
    if len(data) < need:
        raise LengthError(f"image file has {len(data)} bytes, header promises {need}")
    px = np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=16)
    return px.reshape(n, rows, cols) / 255.0


def parse_labels(data: bytes) -> np.ndarray:
    _check_magic(data, LABEL_MAGIC)
    if len(data) < 8:
        raise LengthError("label file shorter than its header")
    n = struct.unpack(">I", data[4:8])[0]
    if len(data) < 8 + n:
        raise LengthError(f"label file has {len(data) - 8} labels, header promises {n}")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_mnist(images_path, labels_path) -> MnistSet:
    return MnistSet(parse_images(_read(images_path)), parse_labels(_read(labels_path)))


def idx_bytes(images=None, labels=None) -> bytes:
    """Serialize uint8 images ``(n, 28, 28)`` or labels ``(n,)`` as IDX."""
    if images is not None:
        a = np.asarray(images, dtype=np.uint8)
        return struct.pack(">IIII", IMAGE_MAGIC, *a.shape) + a.tobytes()
    a = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, a.size) + a.tobytes()
