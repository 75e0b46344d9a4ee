"""Synthetic sensors with known multiplicative PRNU, and iris-like scenes.

A capture is ``clamp(scene * (1 + k) + N(0, read_noise_sigma**2))``
quantized to 8-bit levels, where ``k`` is the sensor's PRNU field.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DimensionMismatchError
from .image import Image, as_array, quantize
from .rng import stream

# PRNU std relative to intensity; see README for why this is not 0.02
DEFAULT_STRENGTH = 0.002
DEFAULT_READ_NOISE = 2.0

SENSOR_MAGIC = b"SYNK1"
_HEADER = struct.Struct("<5sIIddQ")


@dataclass(frozen=True, eq=False)
class SyntheticSensor:
    sensor_id: str
    prnu_field: np.ndarray
    strength: float
    read_noise_sigma: float
    rng_seed: int

    def __post_init__(self):
        if not self.strength > 0:
            raise ValueError("strength must be positive")
        if self.read_noise_sigma < 0:
            raise ValueError("read_noise_sigma must be non-negative")
        field = np.array(self.prnu_field, dtype=np.float64, copy=True)
        if field.ndim != 2:
            raise ValueError("prnu_field must be 2D")
        field.flags.writeable = False
        object.__setattr__(self, "prnu_field", field)

    @classmethod
    def create(cls, sensor_id: str, dims: tuple[int, int], strength: float = DEFAULT_STRENGTH,
               read_noise_sigma: float = DEFAULT_READ_NOISE, rng_seed: int = 0) -> "SyntheticSensor":
        """Draw an i.i.d. Gaussian PRNU field of the given strength."""
        if not strength > 0:
            raise ValueError("strength must be positive")
        field = stream(rng_seed, "prnu-field").standard_normal(tuple(dims)) * strength
        return cls(sensor_id, field, float(strength), float(read_noise_sigma), int(rng_seed))

    @property
    def dims(self) -> tuple[int, int]:
        return self.prnu_field.shape

    def save(self, path) -> None:
        sid = self.sensor_id.encode("utf-8")
        h, w = self.dims
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(SENSOR_MAGIC, h, w, self.strength, self.read_noise_sigma, self.rng_seed))
            fh.write(bytes([len(sid)]) + sid)
            fh.write(self.prnu_field.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "SyntheticSensor":
        data = Path(path).read_bytes()
        magic, h, w, strength, sigma, seed = _HEADER.unpack_from(data)
        if magic != SENSOR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        pos = _HEADER.size
        n = data[pos]
        sid = data[pos + 1:pos + 1 + n].decode("utf-8")
        pos += 1 + n
        if len(data) != pos + 8 * h * w:
            raise ValueError(f"{path}: expected {h}x{w} float64 values")
        field = np.frombuffer(data, dtype="<f8", offset=pos).reshape(h, w)
        return cls(sid, field, strength, sigma, seed)


def capture(sensor: SyntheticSensor, scene, shot_seed: int) -> Image:
    """One 8-bit exposure of ``scene`` through ``sensor``."""
    s = as_array(scene)
    if s.shape != sensor.dims:
        raise DimensionMismatchError(f"scene {s.shape} vs sensor {sensor.dims}")
    out = s * (1.0 + sensor.prnu_field)
    if sensor.read_noise_sigma > 0:
        noise = stream(sensor.rng_seed, "capture", shot_seed).standard_normal(s.shape)
        out = out + sensor.read_noise_sigma * noise
    return Image(quantize(out).astype(np.float64))


def make_scene(dims: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """One iris-like scene: bright smooth surround, textured ring, dark pupil."""
    h, w = dims
    scale = max(h, w) / 160.0
    surround = gaussian_filter(rng.standard_normal((h, w)), 4.0 * scale, mode="reflect")
    surround *= 50.0 / max(surround.std(), 1e-12)
    fine = gaussian_filter(rng.standard_normal((h, w)), 1.0, mode="reflect")
    fine *= 6.0 / max(fine.std(), 1e-12)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy = h / 2 + rng.uniform(-h / 12, h / 12)
    cx = w / 2 + rng.uniform(-w / 10, w / 10)
    rad = np.hypot(yy - cy, xx - cx)
    theta = np.arctan2(yy - cy, xx - cx)
    pupil_r = rng.uniform(0.083, 0.15) * h
    iris_r = rng.uniform(0.32, 0.40) * h
    ring_freq = rng.uniform(0.8, 1.4) / scale
    spokes = rng.integers(6, 14)

    img = rng.uniform(120.0, 140.0) + surround + fine
    iris = (rad > pupil_r) & (rad < iris_r)
    ring = 12.0 * np.sin(rad * ring_freq) * np.cos(theta * spokes)
    img = np.where(iris, img - 25.0 + ring, img)
    img = np.where(rad <= pupil_r, 30.0 + 0.2 * surround, img)
    return np.clip(img, 0.0, 255.0)


def make_scene_bank(count: int, dims: tuple[int, int], rng_seed: int) -> list[Image]:
    """``count`` distinct scenes, fully determined by ``rng_seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = stream(rng_seed, "scene-bank")
    return [Image(make_scene(tuple(dims), rng)) for _ in range(count)]


def capture_bank(sensor: SyntheticSensor, count: int, scene_seed: int,
                 shot_offset: int = 0) -> list[Image]:
    """Captures of ``count`` fresh scenes, one shot seed per image."""
    scenes = make_scene_bank(count, sensor.dims, scene_seed)
    return [capture(sensor, sc, shot_offset + i) for i, sc in enumerate(scenes)]
