"""Fourier-domain image path: transforms, noise, the difference step and image files."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .encoding import unit_columns
from .errors import (
    ChannelCountError,
    FormatError,
    IncompatibleSpectraError,
    InvalidParameterError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class ImageTensor:
    """``pixels`` has shape (height, width) or (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise ChannelCountError(f"unsupported pixel shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3


@dataclass(frozen=True)
class SpectrumTensor:
    """Unshifted 2D spectrum; DC sits at index (0, 0)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2:
            raise ShapeMismatchError("spectra are 2D")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def shape(self):
        return self.coeffs.shape


def _pixels(img):
    return img.pixels if isinstance(img, ImageTensor) else np.asarray(img, dtype=float)


def dft2(img) -> SpectrumTensor:
    px = _pixels(img)
    if px.ndim != 2:
        raise ChannelCountError("dft2 takes a single channel")
    return SpectrumTensor(np.fft.fft2(px))


def idft2(spec) -> ImageTensor:
    c = spec.coeffs if isinstance(spec, SpectrumTensor) else np.asarray(spec)
    return ImageTensor(np.fft.ifft2(c).real)


def idft2_complex(spec) -> np.ndarray:
    c = spec.coeffs if isinstance(spec, SpectrumTensor) else np.asarray(spec)
    return np.fft.ifft2(c)


def awgn_add(img, mean: float, std: float, seed: int) -> ImageTensor:
    if not std >= 0:
        raise InvalidParameterError(f"noise std must be non-negative, got {std}")
    px = _pixels(img)
    rng = np.random.default_rng(seed)
    return ImageTensor(px + rng.normal(mean, std, size=px.shape))


def constant_image(value: float, shape) -> ImageTensor:
    return ImageTensor(np.full(shape, float(value)))


def oracle_subtract(image_spec: SpectrumTensor, noise_spec: SpectrumTensor) -> SpectrumTensor:
    if image_spec.shape != noise_spec.shape:
        raise IncompatibleSpectraError(f"{image_spec.shape} vs {noise_spec.shape}")
    return SpectrumTensor(image_spec.coeffs - noise_spec.coeffs)


def mse_percent(a, b) -> float:
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"{pa.shape} vs {pb.shape}")
    return float(100.0 * np.mean((pa - pb) ** 2))


def split_rgb(img: ImageTensor):
    if img.channels != 3:
        raise ChannelCountError(f"expected 3 channels, got {img.channels}")
    return tuple(ImageTensor(img.pixels[:, :, k]) for k in range(3))


def merge_rgb(r: ImageTensor, g: ImageTensor, b: ImageTensor) -> ImageTensor:
    planes = [r, g, b]
    if any(p.channels != 1 for p in planes):
        raise ChannelCountError("merge_rgb takes single-channel planes")
    if len({p.pixels.shape for p in planes}) != 1:
        raise ShapeMismatchError("planes differ in shape")
    return ImageTensor(np.stack([p.pixels for p in planes], axis=2))


def spectrum_to_targets(spec: SpectrumTensor):
    """Unit complex column targets plus the column norms that undo the normalization."""
    units, norms = unit_columns(spec.coeffs)
    return [units[:, i] for i in range(units.shape[1])], norms


def targets_to_spectrum(columns, scales) -> SpectrumTensor:
    cols = np.stack([np.asarray(c, dtype=complex) for c in columns], axis=1)
    return SpectrumTensor(cols * np.asarray(scales, dtype=float)[None, :])


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def _quantize(px):
    return np.round(np.clip(px, 0.0, 1.0) * 255).astype(np.uint8)


def image_bytes(img: ImageTensor) -> bytes:
    """Binary PGM (P5) for one channel, PPM (P6) for three."""
    magic = b"P5" if img.channels == 1 else b"P6"
    head = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return head + _quantize(img.pixels).tobytes()


def write_image(path, img: ImageTensor):
    with open(path, "wb") as fh:
        fh.write(image_bytes(img))


def parse_image(data: bytes) -> ImageTensor:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated image header")
        tokens.append(data[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise FormatError(f"unsupported image header {magic!r} maxval {maxval}")
    ch = 1 if magic == b"P5" else 3
    body = np.frombuffer(data, dtype=np.uint8, count=w * h * ch, offset=pos)
    shape = (h, w) if ch == 1 else (h, w, 3)
    return ImageTensor(body.reshape(shape) / 255.0)


def read_image(path) -> ImageTensor:
    with open(path, "rb") as fh:
        return parse_image(fh.read())


def spectrum_csv(spec: SpectrumTensor) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ky", "kx", "re", "im"])
    for (ky, kx), v in np.ndenumerate(spec.coeffs):
        w.writerow([ky, kx, f"{v.real:.17g}", f"{v.imag:.17g}"])
    return buf.getvalue()


def parse_spectrum_csv(text: str) -> SpectrumTensor:
    rows = list(csv.DictReader(io.StringIO(text)))
    h = 1 + max(int(r["ky"]) for r in rows)
    w = 1 + max(int(r["kx"]) for r in rows)
    out = np.zeros((h, w), dtype=complex)
    for r in rows:
        out[int(r["ky"]), int(r["kx"])] = complex(float(r["re"]), float(r["im"]))
    return SpectrumTensor(out)
