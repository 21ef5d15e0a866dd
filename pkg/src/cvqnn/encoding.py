"""Classical encoders and target construction.

Images are reduced to a handful of quadrature values by a seeded Gaussian matrix,
and those values become displacement amplitudes for the network inputs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, InvalidLabelError, InvalidParameterError, SingularBasisError
from .fock import HBAR, FockState

CLASS_AMPLITUDE = 0.5  # <x> = 1 on the class mode
_HEADER = struct.Struct("<QIId")


@dataclass(frozen=True)
class EncodingMatrix:
    """Seeded Gaussian reduction matrix with entries drawn from N(0, 1/cols).

    Only ``seed``, ``rows``, ``cols`` and ``scale`` are stored; the entries are
    regenerated from the seed.
    """

    seed: int
    rows: int
    cols: int
    scale: float = 1.0
    entries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError("encoder shape must be positive")
        if not np.isfinite(self.scale):
            raise InvalidParameterError("encoder scale must be finite")
        rng = np.random.default_rng(self.seed)
        m = rng.normal(0.0, 1.0 / np.sqrt(self.cols), size=(self.rows, self.cols))
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def fitted(self, images) -> "EncodingMatrix":
        """Copy whose scale maps every raw output over ``images`` into [-1, 1]."""
        raw = np.asarray(images, dtype=float).reshape(-1, self.cols) @ self.entries.T
        peak = np.max(np.abs(raw)) if raw.size else 0.0
        return EncodingMatrix(self.seed, self.rows, self.cols, 1.0 / peak if peak > 0 else 1.0)

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.seed, self.rows, self.cols, self.scale)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodingMatrix":
        if len(data) != _HEADER.size:
            raise InvalidInputError(f"encoder record is {len(data)} bytes, expected {_HEADER.size}")
        return cls(*_HEADER.unpack(data))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "EncodingMatrix":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def identity_encoder(n: int) -> EncodingMatrix:
    """An encoder whose entries are the identity; handy for checks."""
    enc = EncodingMatrix(0, n, n)
    object.__setattr__(enc, "entries", np.eye(n))
    return enc


def encode(image, enc: EncodingMatrix) -> np.ndarray:
    x = np.asarray(image, dtype=float).reshape(-1)
    if x.size != enc.cols:
        raise InvalidInputError(f"image has {x.size} values, encoder expects {enc.cols}")
    return enc.scale * (enc.entries @ x)


def quadratures_to_displacement(x, p) -> complex:
    """Coherent amplitude whose state has mean quadratures ``(x, p)``."""
    if not (np.isfinite(x) and np.isfinite(p)):
        raise InvalidParameterError("quadratures must be finite")
    return complex(x, p) / np.sqrt(2 * HBAR)


def pairs_to_displacements(values) -> np.ndarray:
    """Interleaved ``(x0, p0, x1, p1, ...)`` to one amplitude per mode."""
    v = np.asarray(values, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("quadratures must be finite")
    return (v[:, 0] + 1j * v[:, 1]) / np.sqrt(2 * HBAR)


@dataclass(frozen=True)
class BasisSet:
    """Columns of ``vectors`` are the basis b_1..b_N."""

    vectors: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.vectors, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if np.any(np.linalg.norm(b, axis=0) == 0):
            raise SingularBasisError("basis contains a zero vector")
        b.setflags(write=False)
        object.__setattr__(self, "vectors", b)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def orthogonal(self) -> bool:
        g = self.vectors.T @ self.vectors
        return bool(np.max(np.abs(g - np.diag(np.diag(g))), initial=0.0) <= 1e-10)


def basis_project(x, basis: BasisSet) -> np.ndarray:
    """Least-squares projection B (B^T B)^-1 B^T x onto the span of the basis."""
    b = basis.vectors
    x = np.asarray(x, dtype=float)
    if x.shape[0] != basis.dim:
        raise InvalidInputError(f"vector has length {x.shape[0]}, basis dim is {basis.dim}")
    gram = b.T @ b
    if np.linalg.matrix_rank(gram) < b.shape[1]:
        raise SingularBasisError("basis vectors are linearly dependent")
    return b @ np.linalg.solve(gram, b.T @ x)


def make_targets_classification(labels: Sequence[int], modes: int, cutoff: int):
    out = []
    for c in labels:
        if not 0 <= int(c) < modes:
            raise InvalidLabelError(f"label {c} outside 0..{modes - 1}")
        alphas = np.zeros(modes, dtype=complex)
        alphas[int(c)] = CLASS_AMPLITUDE
        out.append(FockState.coherent(alphas, cutoff))
    return out


def unit_columns(mat):
    """Normalize each column; zero columns become e_0. Returns ``(units, norms)``."""
    mat = np.asarray(mat)
    norms = np.linalg.norm(mat, axis=0)
    units = np.zeros(mat.shape, dtype=np.result_type(mat.dtype, float))
    nz = norms > 0
    units[:, nz] = mat[:, nz] / norms[nz]
    units[0, ~nz] = 1.0
    return units, norms


def make_targets_columns(image) -> list:
    """The normalized columns of a square image, as a list of vectors."""
    units, _ = unit_columns(np.asarray(image, dtype=float))
    return [units[:, i] for i in range(units.shape[1])]


def column_inputs(image, enc: EncodingMatrix) -> np.ndarray:
    """One displacement amplitude per image column.

    Each column is encoded on its own: ``enc`` has two rows over the full image,
    and column ``i`` contributes only its own pixels, giving an ``(x, p)`` pair.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    if enc.rows != 2 or enc.cols != h * w:
        raise InvalidInputError("column encoder needs 2 rows over the whole image")
    e = enc.entries.reshape(2, h, w)
    q = enc.scale * np.einsum("krc,rc->kc", e, img)
    return (q[0] + 1j * q[1]) / np.sqrt(2 * HBAR)


def fit_column_encoder(enc: EncodingMatrix, images) -> EncodingMatrix:
    """Rescale so every per-column (x, p) value over ``images`` lies in [-1, 1]."""
    imgs = np.asarray(images, dtype=float)
    if imgs.ndim == 2:
        imgs = imgs[None]
    raw = EncodingMatrix(enc.seed, enc.rows, enc.cols)
    peak = 0.0
    for im in imgs:
        a = column_inputs(im, raw) * np.sqrt(2 * HBAR)
        peak = max(peak, np.max(np.abs(a.real)), np.max(np.abs(a.imag)))
    return EncodingMatrix(enc.seed, enc.rows, enc.cols, 1.0 / peak if peak > 0 else 1.0)
