"""Targeted PRNU spoofing.

``select_candidate`` picks the target-sensor image whose patch-mean
profile best matches the input, and ``perturb`` nudges the input one
patch at a time toward (or away from) that candidate, keeping whichever
direction raises the NCC with the target pattern. The classic injection
and substitution attacks are provided for comparison.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .denoise import DenoiseParams, denoise, residual_batch
from .errors import DegenerateScoreError, DimensionMismatchError, EmptyInputError
from .fingerprint import NCCScore, ReferencePattern, _unit_centered
from .image import Image, as_array, check_same_shape
from .rng import stream


@dataclass(frozen=True)
class PatchSpec:
    count: int = 10
    patch_h: int = 10
    patch_w: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.count < 1 or self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch count and size must be positive")


@dataclass(frozen=True)
class PerturbParams:
    alpha: float = 0.01
    eta: float = 0.1
    max_iters: int = 3000
    patch: PatchSpec = field(default_factory=PatchSpec)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


class TrajectoryPoint(NamedTuple):
    iteration: int
    phi_target: float
    phi_source: float
    phi_target_rejected: float


@dataclass
class SpoofResult:
    perturbed: Image
    iterations_used: int
    succeeded: bool
    trajectory: list[TrajectoryPoint] | None = None
    final_scores: list[NCCScore] = field(default_factory=list)
    initial_source_score: float = float("nan")
    visited: list[int] = field(default_factory=list)
    snapshots: dict[int, Image] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iterations_used": self.iterations_used,
            "succeeded": self.succeeded,
            "initial_source_score": self.initial_source_score,
            "final_scores": [{"sensor_id": s.sensor_id, "value": s.value} for s in self.final_scores],
            "visited_patches": sorted(set(self.visited)),
        }


def patch_grid(shape, patch_h: int, patch_w: int) -> tuple[int, int]:
    """Number of aligned patch rows and columns (the last ones may be partial)."""
    h, w = shape
    if patch_h > h or patch_w > w:
        raise ValueError(f"patch {patch_h}x{patch_w} does not fit in {h}x{w}")
    return -(-h // patch_h), -(-w // patch_w)


def patch_slices(index: int, n_cols: int, patch_h: int, patch_w: int):
    px, py = divmod(int(index), n_cols)
    return slice(px * patch_h, (px + 1) * patch_h), slice(py * patch_w, (py + 1) * patch_w)


def visited_mask(shape, visited: Sequence[int], patch_h: int, patch_w: int) -> np.ndarray:
    """Boolean mask of every pixel covered by the given patch indices."""
    _, n_cols = patch_grid(shape, patch_h, patch_w)
    mask = np.zeros(shape, dtype=bool)
    for q in set(visited):
        mask[patch_slices(q, n_cols, patch_h, patch_w)] = True
    return mask


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0.0:
        return 0.0
    return float(np.dot(a, b) / den)


def select_candidate(input_img, gallery_images: Sequence, patch: PatchSpec | None = None) -> tuple[Image, int]:
    """Gallery image whose patch means correlate best with the input's."""
    patch = patch or PatchSpec()
    if len(gallery_images) == 0:
        raise EmptyInputError("candidate gallery is empty")
    x = as_array(input_img)
    arrays = [as_array(g) for g in gallery_images]
    check_same_shape(x, *arrays, what="input and gallery images")
    n_rows, n_cols = patch_grid(x.shape, patch.patch_h, patch.patch_w)
    if patch.count > n_rows * n_cols:
        raise ValueError(f"{patch.count} patches requested but only {n_rows * n_cols} positions exist")
    picks = stream(patch.rng_seed, "candidate-patches").choice(n_rows * n_cols, patch.count, replace=False)
    slices = [patch_slices(p, n_cols, patch.patch_h, patch.patch_w) for p in picks]

    def profile(a):
        return np.array([a[s].mean() for s in slices])

    vx = profile(x)
    corrs = [_pearson(vx, profile(g)) for g in arrays]
    best = int(np.argmax(corrs))
    chosen = gallery_images[best]
    return (chosen if isinstance(chosen, Image) else Image(arrays[best])), best


def _phi(residuals: np.ndarray, unit: np.ndarray) -> np.ndarray:
    # NCC of each residual in a (n, h, w) stack with a centred unit pattern
    flat = residuals.reshape(len(residuals), -1)
    flat = flat - flat.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", flat, flat))
    dots = flat @ unit.ravel()
    return np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)


def perturb(input_img, candidate, source: ReferencePattern, target: ReferencePattern,
            params: PerturbParams | None = None, dp: DenoiseParams | None = None,
            record_trajectory: bool = True, snapshot_at: Sequence[int] = ()) -> SpoofResult:
    """Patch-wise hill climb toward the target sensor's pattern.

    Runs at least one update, then stops once
    ``(phi_t - phi_o) / phi_o(input) > eta`` or after ``max_iters``
    updates. ``snapshot_at`` lists iteration counts at which a copy of the
    still-running image is kept; with the same seed this reproduces the
    output of a shorter run without redoing it.
    """
    params = params or PerturbParams()
    dp = dp or DenoiseParams()
    x = as_array(input_img)
    xc = as_array(candidate)
    check_same_shape(x, xc, source.values, target.values, what="input, candidate and patterns")
    ph, pw = params.patch.patch_h, params.patch.patch_w
    n_rows, n_cols = patch_grid(x.shape, ph, pw)

    unit_t = _unit_centered(target.values)
    unit_o = _unit_centered(source.values)
    phi0 = float(_phi(residual_batch(x[None], dp), unit_o)[0])
    if not phi0 > 0:
        raise DegenerateScoreError(f"source score of the input is {phi0:.3g}; need > 0")

    rng = stream(params.rng_seed, "patch-sampling")
    wanted = set(int(s) for s in snapshot_at)
    y = x.copy()
    trajectory = [] if record_trajectory else None
    visited = []
    snapshots = {}
    it = 0
    succeeded = False
    stack = np.empty((2,) + x.shape)
    while True:
        q = int(rng.integers(n_rows * n_cols))
        rows, cols = patch_slices(q, n_cols, ph, pw)
        step = params.alpha * (xc[rows, cols] - y[rows, cols])
        stack[0] = y
        stack[1] = y
        stack[0, rows, cols] = np.clip(y[rows, cols] + step, 0.0, 255.0)
        stack[1, rows, cols] = np.clip(y[rows, cols] - step, 0.0, 255.0)
        res = residual_batch(stack, dp)
        phi_t = _phi(res, unit_t)
        keep = 0 if phi_t[0] >= phi_t[1] else 1
        y = stack[keep].copy()
        phi_o = float(_phi(res[keep:keep + 1], unit_o)[0])
        it += 1
        visited.append(q)
        if record_trajectory:
            trajectory.append(TrajectoryPoint(it, float(phi_t[keep]), phi_o, float(phi_t[1 - keep])))
        if (phi_t[keep] - phi_o) / phi0 > params.eta:
            succeeded = True
            break
        if it >= params.max_iters:
            break
        if it in wanted:
            snapshots[it] = Image(y)

    final = [NCCScore(phi_o, source.sensor_id), NCCScore(float(phi_t[keep]), target.sensor_id)]
    return SpoofResult(Image(y), it, succeeded, trajectory, final, phi0, visited, snapshots)


def write_trajectory_csv(result: SpoofResult, path) -> None:
    if result.trajectory is None:
        raise ValueError("result was computed without a trajectory")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "phi_target", "phi_source"])
        for p in result.trajectory:
            writer.writerow([p.iteration, repr(p.phi_target), repr(p.phi_source)])


def _pattern_array(pattern, shape):
    k = as_array(pattern.values if isinstance(pattern, ReferencePattern) else pattern)
    if k.shape != tuple(shape):
        raise DimensionMismatchError(f"pattern {k.shape} vs image {tuple(shape)}")
    return k


def baseline1_inject(input_img, target, gamma: float = 1.0) -> Image:
    """PRNU injection: I + I * gamma * K_T."""
    x = as_array(input_img)
    k = _pattern_array(target, x.shape)
    return Image(np.clip(x + x * gamma * k, 0.0, 255.0))


def baseline2_substitute(input_img, source, target, gamma: float = 1.0, beta: float = 1.0) -> Image:
    """PRNU substitution with both patterns scaled by their joint max magnitude."""
    x = as_array(input_img)
    ks = _pattern_array(source, x.shape)
    kt = _pattern_array(target, x.shape)
    scale = max(np.abs(ks).max(), np.abs(kt).max())
    if scale == 0:
        raise ValueError("source and target patterns are both identically zero")
    return Image(np.clip(x - gamma * ks / scale + beta * kt / scale, 0.0, 255.0))


def baseline_denoised_inject(input_img, target, gamma: float = 1.0,
                             dp: DenoiseParams | None = None) -> Image:
    """Denoised injection: F(I) + gamma * K_T."""
    x = as_array(input_img)
    k = _pattern_array(target, x.shape)
    return Image(np.clip(denoise(x, dp) + gamma * k, 0.0, 255.0))
