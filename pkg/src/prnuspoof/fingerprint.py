"""Reference-pattern estimation, NCC scoring and sensor classification."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .denoise import DenoiseParams, NoiseResidual, residual_batch
from .errors import DimensionMismatchError, EmptyInputError
from .image import as_array, check_same_shape

PATTERN_MAGIC = b"PRNU1"
PATTERN_SUFFIX = ".prnu"
_HEADER = struct.Struct("<5sIIIB")

POSTPROCESS_MODES = ("reference", "per_residual")


@dataclass(frozen=True, eq=False)
class ReferencePattern:
    values: np.ndarray
    sensor_id: str
    train_count: int
    postprocessed: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise ValueError("reference pattern must be 2D")
        if not np.all(np.isfinite(v)):
            raise ValueError("reference pattern contains non-finite values")
        if int(self.train_count) < 1:
            raise ValueError("train_count must be >= 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "train_count", int(self.train_count))
        object.__setattr__(self, "postprocessed", bool(self.postprocessed))

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def save(self, path) -> None:
        sid = self.sensor_id.encode("utf-8")
        if len(sid) > 255:
            raise ValueError("sensor_id longer than 255 bytes")
        h, w = self.dims
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(PATTERN_MAGIC, h, w, self.train_count, int(self.postprocessed)))
            fh.write(bytes([len(sid)]) + sid)
            fh.write(self.values.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "ReferencePattern":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size + 1:
            raise ValueError(f"{path}: truncated pattern file")
        magic, h, w, n, flag = _HEADER.unpack_from(data)
        if magic != PATTERN_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        pos = _HEADER.size
        id_len = data[pos]
        sid = data[pos + 1:pos + 1 + id_len].decode("utf-8")
        pos += 1 + id_len
        if len(data) != pos + 4 * h * w:
            raise ValueError(f"{path}: expected {h}x{w} float32 values")
        values = np.frombuffer(data, dtype="<f4", offset=pos).reshape(h, w).astype(np.float64)
        return cls(values, sid, n, bool(flag))


@dataclass(frozen=True)
class NCCScore:
    value: float
    sensor_id: str


class SensorGallery:
    """Ordered reference patterns sharing one size; order breaks score ties."""

    def __init__(self, patterns: Iterable[ReferencePattern]):
        patterns = tuple(patterns)
        if not patterns:
            raise EmptyInputError("gallery needs at least one pattern")
        ids = [p.sensor_id for p in patterns]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor ids in gallery: {ids}")
        check_same_shape(*(p.values for p in patterns), what="gallery patterns")
        self.patterns = patterns
        self._unit = np.stack([_unit_centered(p.values).ravel() for p in patterns])

    @property
    def dims(self) -> tuple[int, int]:
        return self.patterns[0].dims

    @property
    def sensor_ids(self) -> list[str]:
        return [p.sensor_id for p in self.patterns]

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __getitem__(self, sensor_id: str) -> ReferencePattern:
        for p in self.patterns:
            if p.sensor_id == sensor_id:
                return p
        raise KeyError(sensor_id)

    def scores(self, resid) -> np.ndarray:
        """NCC of one residual array against every pattern, in gallery order."""
        r = np.asarray(resid, dtype=np.float64)
        if r.shape != self.dims:
            raise DimensionMismatchError(f"residual {r.shape} vs gallery {self.dims}")
        u = _unit_centered(r).ravel()
        return np.clip(self._unit @ u, -1.0, 1.0)

    def save_dir(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for p in self.patterns:
            p.save(directory / f"{p.sensor_id}{PATTERN_SUFFIX}")

    @classmethod
    def load_dir(cls, directory) -> "SensorGallery":
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"gallery directory not found: {directory}")
        files = sorted(directory.glob(f"*{PATTERN_SUFFIX}"))
        if not files:
            raise EmptyInputError(f"no {PATTERN_SUFFIX} files in {directory}")
        return cls(ReferencePattern.load(f) for f in files)


def _unit_centered(x: np.ndarray) -> np.ndarray:
    c = x - x.mean()
    n = np.sqrt(np.sum(c * c))
    if n == 0.0:
        return np.zeros_like(c)
    return c / n


def correlate(a, b) -> float:
    """Normalized cross-correlation of two equally sized arrays.

    Both are mean-subtracted and L2-normalised as flat vectors; a
    zero-norm input gives 0.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot correlate {a.shape} with {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt(np.dot(a, a))
    nb = np.sqrt(np.dot(b, b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def ncc(resid, pattern: ReferencePattern) -> NCCScore:
    r = resid.values if isinstance(resid, NoiseResidual) else as_array(resid)
    if r.shape != pattern.dims:
        raise DimensionMismatchError(f"residual {r.shape} vs pattern {pattern.dims}")
    return NCCScore(correlate(r, pattern.values), pattern.sensor_id)


def zero_mean(pattern) -> np.ndarray:
    """Subtract every column's mean, then every row's mean."""
    x = np.asarray(pattern, dtype=np.float64)
    x = x - x.mean(axis=0, keepdims=True)
    return x - x.mean(axis=1, keepdims=True)


def wiener_dft(pattern, noise_variance: float | None = None,
               window_sizes: Sequence[int] = (3, 5, 7, 9)) -> np.ndarray:
    """Suppress peaks in the pattern's spectrum.

    The DFT magnitude (scaled so its mean square equals the pattern's
    variance) is passed through the local Wiener estimator and only the
    flat, noise-like share is kept; phases are untouched. With no
    ``noise_variance`` the pattern's own variance is used.
    """
    x = np.asarray(pattern, dtype=np.float64)
    if noise_variance is None:
        noise_variance = float(np.var(x))
    if noise_variance <= 0:
        return x.copy()
    spec = np.fft.fft2(x)
    mag = np.abs(spec) / np.sqrt(x.size)
    energy = mag * mag
    s2 = None
    for w in window_sizes:
        m = uniform_filter(energy, size=w, mode="wrap") - noise_variance
        s2 = m if s2 is None else np.minimum(s2, m)
    s2 = np.maximum(s2, 0.0)
    gain = noise_variance / (s2 + noise_variance)
    return np.real(np.fft.ifft2(spec * gain))


def postprocess(pattern) -> np.ndarray:
    """Zero-mean followed by DFT-domain Wiener cleanup."""
    return wiener_dft(zero_mean(pattern))


def _stack(images) -> np.ndarray:
    arrays = [as_array(im) for im in images]
    if not arrays:
        raise EmptyInputError("no training images")
    check_same_shape(*arrays, what="training images")
    return np.stack(arrays)


def estimate_reference(train, params: DenoiseParams | None = None, sensor_id: str = "sensor",
                       postprocess_pattern: bool = True, mode: str = "reference",
                       batch_size: int = 64) -> ReferencePattern:
    """MLE reference pattern of one sensor from its training images.

    ``mode="reference"`` cleans up the final estimate; ``"per_residual"``
    cleans each residual before accumulation and then only re-centres the
    rows and columns of the result.
    """
    if mode not in POSTPROCESS_MODES:
        raise ValueError(f"mode must be one of {POSTPROCESS_MODES}")
    images = _stack(train)
    num = np.zeros(images.shape[1:])
    den = np.zeros(images.shape[1:])
    for start in range(0, len(images), batch_size):
        chunk = images[start:start + batch_size]
        res = residual_batch(chunk, params)
        if postprocess_pattern and mode == "per_residual":
            res = np.stack([postprocess(r) for r in res])
        num += np.sum(res * chunk, axis=0)
        den += np.sum(chunk * chunk, axis=0)
    k = np.zeros_like(num)
    np.divide(num, den, out=k, where=den > 0)
    if postprocess_pattern:
        k = postprocess(k) if mode == "reference" else zero_mean(k)
    return ReferencePattern(k, sensor_id, len(images), postprocess_pattern)


def classify_residual(resid, gallery: SensorGallery) -> tuple[str, list[NCCScore]]:
    values = gallery.scores(resid)
    best = int(np.argmax(values))
    scores = [NCCScore(float(v), sid) for v, sid in zip(values, gallery.sensor_ids)]
    return gallery.sensor_ids[best], scores


def classify(img, gallery: SensorGallery,
             params: DenoiseParams | None = None) -> tuple[str, list[NCCScore]]:
    """Predicted sensor (highest NCC, first wins ties) and all scores."""
    if len(gallery) == 0:
        raise EmptyInputError("empty gallery")
    x = as_array(img)
    if x.shape != gallery.dims:
        raise DimensionMismatchError(f"image {x.shape} vs gallery {gallery.dims}")
    return classify_residual(residual_batch(x[None], params)[0], gallery)
