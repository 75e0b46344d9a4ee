"""Grayscale image container, file I/O, resizing and clamping.

Pixels are kept as float64 in [0, 255]; quantization to 8 bits only
happens on export.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DimensionMismatchError, ImageFormatError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable 2D grayscale image with float pixels in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2D array, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 255.0:
            raise ValueError("pixel values must lie in [0, 255]; use clamp() first")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr, clip: bool = False) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        if clip:
            arr = np.clip(arr, 0.0, 255.0)
        return cls(arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.pixels
        return self.pixels.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


def as_array(img) -> np.ndarray:
    """Float64 view of an Image or array-like."""
    if isinstance(img, Image):
        return img.pixels
    return np.asarray(img, dtype=np.float64)


def check_same_shape(*arrays, what: str = "inputs") -> tuple[int, int]:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"{what} have mismatched shapes: {sorted(shapes)}")
    return shapes.pop()


def clamp(img) -> Image:
    """Saturate every pixel into [0, 255]."""
    return Image(np.clip(as_array(img), 0.0, 255.0))


def quantize(img) -> np.ndarray:
    """8-bit export values: round half away from zero, then clamp."""
    px = as_array(img)
    rounded = np.sign(px) * np.floor(np.abs(px) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def resize_bilinear(img, out_h: int, out_w: int) -> Image:
    """Bilinear resize with pixel centres at half-integer positions.

    Source coordinates are ``(i + 0.5) * in / out - 0.5``, clipped to the
    valid range, so a same-size resize is the identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    px = as_array(img)
    in_h, in_w = px.shape

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis_weights(in_h, out_h)
    c0, c1, fc = axis_weights(in_w, out_w)
    top = px[r0][:, c0] * (1 - fc) + px[r0][:, c1] * fc
    bottom = px[r1][:, c0] * (1 - fc) + px[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bottom * fr[:, None]
    return Image(np.clip(out, 0.0, 255.0))


def load_image(path, expected: tuple[int, int] | None = None) -> Image:
    """Decode an 8-bit PGM or PNG file into an Image.

    Colour inputs are reduced to luma with weights 0.299/0.587/0.114.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode == "P":
                pil = pil.convert("RGBA" if "transparency" in pil.info else "RGB")
                mode = pil.mode
            data = np.asarray(pil)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc

    if mode in ("L", "1"):
        px = data.astype(np.float64)
        if mode == "1":
            px = px * 255.0
    elif mode == "LA":
        px = data[..., 0].astype(np.float64)
    elif mode in ("RGB", "RGBA"):
        rgb = data[..., :3].astype(np.float64)
        px = rgb @ np.array(LUMA_WEIGHTS)
    else:
        raise ImageFormatError(f"{path}: unsupported pixel mode {mode!r} (8-bit only)")

    img = Image(np.clip(px, 0.0, 255.0))
    if expected is not None and tuple(img.shape) != tuple(expected):
        raise DimensionMismatchError(
            f"{path}: expected {tuple(expected)}, got {img.shape}"
        )
    return img


def save_pgm(img, path) -> None:
    """Write a binary (P5) 8-bit PGM."""
    data = quantize(img)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def save_image(img, path) -> None:
    """8-bit PGM for ``.pgm`` paths, otherwise whatever Pillow infers (PNG)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        save_pgm(img, path)
    else:
        PILImage.fromarray(quantize(img)).save(path)


def list_images(directory) -> list[Path]:
    """Sorted PGM/PNG files in a directory."""
    directory = Path(directory)
    exts = {".pgm", ".png"}
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in exts and p.is_file())
