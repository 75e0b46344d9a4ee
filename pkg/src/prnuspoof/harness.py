"""Desk-scale experiments: identification, spoof success rate, iteration study.

Sensors are either directories of real grayscale images or synthetic
sensors from :mod:`prnuspoof.synth`. Every random choice is derived from
``ExperimentConfig.seed``, per-image work runs on an optional process
pool, and results are always gathered in input order, so a report is a
pure function of its config.
"""
from __future__ import annotations

import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .denoise import DenoiseParams, residual_batch
from .errors import EmptyInputError
from .fingerprint import SensorGallery, classify_residual, estimate_reference
from .image import Image, as_array, check_same_shape, list_images, load_image, resize_bilinear
from .rng import derive_seed
from .spoof import (
    PatchSpec, PerturbParams, baseline1_inject, baseline2_substitute, baseline_denoised_inject,
    perturb, select_candidate, visited_mask, write_trajectory_csv,
)
from .synth import DEFAULT_READ_NOISE, DEFAULT_STRENGTH, SyntheticSensor, capture_bank

log = logging.getLogger(__name__)

METHODS = ("proposed", "baseline1", "baseline2", "denoised_inject")


@dataclass(frozen=True)
class SensorSpec:
    """A real sensor (``directory`` set) or a synthetic one."""

    sensor_id: str
    directory: str | None = None
    strength: float = DEFAULT_STRENGTH
    read_noise_sigma: float = DEFAULT_READ_NOISE

    @property
    def synthetic(self) -> bool:
        return self.directory is None


def default_sensors(n: int = 5, strength: float = DEFAULT_STRENGTH) -> tuple[SensorSpec, ...]:
    return tuple(SensorSpec(f"s{i}", strength=strength) for i in range(n))


@dataclass(frozen=True)
class ExperimentConfig:
    sensors: tuple[SensorSpec, ...] = field(default_factory=default_sensors)
    train_count: int = 55
    test_count: int | None = 100
    spoof_count: int = 50
    candidate_count: int | None = None
    working_dims: tuple[int, int] = (120, 160)
    perturb: PerturbParams = field(default_factory=PerturbParams)
    denoise: DenoiseParams = field(default_factory=DenoiseParams)
    output_dir: str = "results"
    seed: int = 0
    pairs: tuple[tuple[str, str], ...] = ()
    gamma: float = 1.0
    beta: float = 1.0
    subject_pattern: str | None = None
    save_trajectories: bool = False

    def __post_init__(self):
        if self.train_count < 1:
            raise ValueError("train_count must be >= 1")
        if self.test_count is not None and self.test_count < 1:
            raise ValueError("test_count must be >= 1")
        if self.spoof_count < 1:
            raise ValueError("spoof_count must be >= 1")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor ids: {ids}")
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "working_dims", tuple(int(d) for d in self.working_dims))
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))

    def sensor_index(self, sensor_id: str) -> int:
        for i, s in enumerate(self.sensors):
            if s.sensor_id == sensor_id:
                return i
        raise KeyError(f"unknown sensor {sensor_id!r}")

    def spoof_pairs(self) -> tuple[tuple[str, str], ...]:
        """Configured pairs, or each sensor spoofed as the next one."""
        if self.pairs:
            return self.pairs
        ids = [s.sensor_id for s in self.sensors]
        return tuple(zip(ids[:-1], ids[1:]))


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: list[list[int]]

    @property
    def accuracies(self) -> list[float]:
        out = []
        for i, row in enumerate(self.counts):
            total = sum(row)
            out.append(100.0 * row[i] / total if total else float("nan"))
        return out

    @property
    def overall_accuracy(self) -> float:
        total = sum(sum(r) for r in self.counts)
        return 100.0 * sum(self.counts[i][i] for i in range(len(self.labels))) / total

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "counts": [list(r) for r in self.counts],
            "accuracies": self.accuracies,
            "overall_accuracy": self.overall_accuracy,
        }

    def to_text(self) -> str:
        width = max(8, *(len(s) for s in self.labels)) + 2
        head = "true \\ pred".ljust(width) + "".join(s.rjust(width) for s in self.labels) + "accuracy %".rjust(12)
        lines = [head]
        for label, row, acc in zip(self.labels, self.counts, self.accuracies):
            lines.append(label.ljust(width) + "".join(str(c).rjust(width) for c in row) + f"{acc:12.2f}")
        lines.append(f"overall accuracy: {self.overall_accuracy:.2f}%")
        return "\n".join(lines) + "\n"


@dataclass
class SSRReport:
    source_id: str
    target_id: str
    method: str
    n_attempted: int
    n_classified_as_target: int
    max_iters: int | None = None
    images: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.n_attempted < 1:
            raise EmptyInputError("an SSR report needs at least one attempted image")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def ssr(self) -> float:
        return 100.0 * self.n_classified_as_target / self.n_attempted

    @property
    def median_psnr(self) -> float:
        vals = [r["psnr"] for r in self.images if r.get("psnr") is not None]
        return float(np.median(vals)) if vals else math.inf

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "target_id": self.target_id,
            "method": self.method,
            "max_iters": self.max_iters,
            "n_attempted": self.n_attempted,
            "n_classified_as_target": self.n_classified_as_target,
            "ssr": self.ssr,
            "images": [_json_safe(r) for r in self.images],
        }


def aggregate_ssr(reports: Sequence[SSRReport]) -> float:
    hits = sum(r.n_classified_as_target for r in reports)
    total = sum(r.n_attempted for r in reports)
    return 100.0 * hits / total


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit range; ``inf`` when equal."""
    x, y = as_array(a), as_array(b)
    check_same_shape(x, y, what="PSNR inputs")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _json_safe(obj):
    # JSON has no infinity; PSNR of an untouched image is written as null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def to_json(obj) -> str:
    """Canonical JSON for reports (sorted keys, fixed separators)."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    elif isinstance(obj, (list, tuple)):
        obj = [o.to_dict() if hasattr(o, "to_dict") else o for o in obj]
    return json.dumps(_json_safe(obj), sort_keys=True, indent=2) + "\n"


def ssr_table(reports: Sequence[SSRReport]) -> str:
    rows = [("source", "target", "method", "max iters", "hits", "attempted", "SSR %", "median PSNR")]
    for r in reports:
        rows.append((r.source_id, r.target_id, r.method, str(r.max_iters or "-"),
                     str(r.n_classified_as_target), str(r.n_attempted), f"{r.ssr:.2f}", f"{r.median_psnr:.2f}"))
    if len(reports) > 1:
        rows.append(("all", "", "", "", str(sum(r.n_classified_as_target for r in reports)),
                     str(sum(r.n_attempted for r in reports)), f"{aggregate_ssr(reports):.2f}", ""))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows) + "\n"


def write_report(output_dir, name: str, report) -> tuple[Path, Path]:
    """Write ``<name>.json`` and ``<name>.txt`` and return both paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, tpath = out / f"{name}.json", out / f"{name}.txt"
    jpath.write_text(to_json(report))
    if isinstance(report, ConfusionMatrix):
        tpath.write_text(report.to_text())
    else:
        tpath.write_text(ssr_table(report if isinstance(report, (list, tuple)) else [report]))
    return jpath, tpath


# ---------------------------------------------------------------- datasets

@dataclass
class SensorData:
    train: list[Image]
    test: list[Image]


@dataclass
class Dataset:
    data: dict[str, SensorData]
    gallery: SensorGallery


def _subject(path: Path, pattern: str) -> str:
    m = re.search(pattern, path.name)
    if not m:
        raise ValueError(f"subject pattern {pattern!r} does not match {path.name}")
    return m.group(1) if m.groups() else m.group(0)


def _load_real(spec: SensorSpec, config: ExperimentConfig) -> SensorData:
    paths = list_images(spec.directory)
    h, w = config.working_dims
    if len(paths) < config.train_count + 1:
        raise EmptyInputError(
            f"sensor {spec.sensor_id}: {len(paths)} images, need at least {config.train_count + 1}")
    train_paths, rest = paths[:config.train_count], paths[config.train_count:]
    if config.subject_pattern:
        seen = {_subject(p, config.subject_pattern) for p in train_paths}
        rest = [p for p in rest if _subject(p, config.subject_pattern) not in seen]
        if not rest:
            raise EmptyInputError(f"sensor {spec.sensor_id}: no test images with unseen subjects")
    if config.test_count is not None:
        rest = rest[:config.test_count]

    def load(p):
        return resize_bilinear(load_image(p), h, w)

    return SensorData([load(p) for p in train_paths], [load(p) for p in rest])


def synthetic_sensor(config: ExperimentConfig, index: int) -> SyntheticSensor:
    spec = config.sensors[index]
    return SyntheticSensor.create(spec.sensor_id, config.working_dims, spec.strength,
                                  spec.read_noise_sigma, derive_seed(config.seed, "synth-sensor", index))


def _load_synthetic(index: int, config: ExperimentConfig) -> SensorData:
    sensor = synthetic_sensor(config, index)
    n_test = 100 if config.test_count is None else config.test_count
    images = capture_bank(sensor, config.train_count + n_test,
                          derive_seed(config.seed, "synth-scenes", index))
    return SensorData(images[:config.train_count], images[config.train_count:])


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Load or synthesize every sensor's images and estimate the gallery."""
    if len(config.sensors) < 2:
        raise ValueError("experiments need at least two sensors")
    data = {}
    patterns = []
    for i, spec in enumerate(config.sensors):
        d = _load_synthetic(i, config) if spec.synthetic else _load_real(spec, config)
        data[spec.sensor_id] = d
        patterns.append(estimate_reference(d.train, config.denoise, spec.sensor_id))
        log.info("sensor %s: %d train, %d test", spec.sensor_id, len(d.train), len(d.test))
    return Dataset(data, SensorGallery(patterns))


# ---------------------------------------------------------------- workers

_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _CTX.clear()
    _CTX.update(ctx)


def _predict(img) -> tuple[str, list[float]]:
    res = residual_batch(as_array(img)[None], _CTX["denoise"])[0]
    label, scores = classify_residual(res, _CTX["gallery"])
    return label, [s.value for s in scores]


def _identify_task(task):
    images = np.stack([as_array(im) for im in task])
    res = residual_batch(images, _CTX["denoise"])
    return [classify_residual(r, _CTX["gallery"])[0] for r in res]


def _spoof_task(task):
    method, src, tgt, index, x, perturb_params, snapshot_at, trajectory_path = task
    gallery = _CTX["gallery"]
    dp = _CTX["denoise"]
    record = {"index": index}
    if method == "proposed":
        cands = _CTX["candidates"][tgt]
        cand, cidx = select_candidate(x, cands, perturb_params.patch)
        result = perturb(x, cand, gallery[src], gallery[tgt], perturb_params, dp,
                         record_trajectory=trajectory_path is not None, snapshot_at=snapshot_at)
        if trajectory_path is not None:
            write_trajectory_csv(result, trajectory_path)
        ph, pw = perturb_params.patch.patch_h, perturb_params.patch.patch_w
        outside = ~visited_mask(x.shape, result.visited, ph, pw)
        record.update(candidate=cidx, initial_source_score=result.initial_source_score,
                      locality_ok=bool(np.array_equal(as_array(result.perturbed)[outside], as_array(x)[outside])))
        outputs = []
        for m in snapshot_at or (perturb_params.max_iters,):
            if result.succeeded and result.iterations_used <= m:
                outputs.append((m, result.perturbed, result.iterations_used, True))
            elif m >= result.iterations_used:
                outputs.append((m, result.perturbed, result.iterations_used, False))
            else:
                outputs.append((m, result.snapshots[m], m, False))
    else:
        if method == "baseline1":
            y = baseline1_inject(x, gallery[tgt], _CTX["gamma"])
        elif method == "baseline2":
            y = baseline2_substitute(x, gallery[src], gallery[tgt], _CTX["gamma"], _CTX["beta"])
        else:
            y = baseline_denoised_inject(x, gallery[tgt], _CTX["gamma"], dp)
        outputs = [(None, y, 0, False)]

    per_m = []
    for m, img, iters, ok in outputs:
        label, scores = _predict(img)
        per_m.append(dict(record, max_iters=m, predicted=label, scores=scores,
                          iterations_used=iters, succeeded=ok, psnr=psnr(x, img)))
    return per_m


def _run(fn, tasks, ctx, jobs):
    jobs = resolve_jobs(jobs)
    if jobs <= 1 or len(tasks) <= 1:
        _init_worker(ctx)
        try:
            return [fn(t) for t in tasks]
        finally:
            _CTX.clear()
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
        return list(pool.map(fn, tasks))


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        return os.cpu_count() or 1
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return int(jobs)


def _context(config: ExperimentConfig, dataset: Dataset, target_ids=()) -> dict:
    cands = {}
    for t in target_ids:
        imgs = dataset.data[t].test
        cands[t] = imgs if config.candidate_count is None else imgs[:config.candidate_count]
    return {"gallery": dataset.gallery, "denoise": config.denoise, "candidates": cands,
            "gamma": config.gamma, "beta": config.beta}


# ---------------------------------------------------------------- experiments

def run_identification(config: ExperimentConfig, dataset: Dataset | None = None,
                       jobs: int | None = 1) -> ConfusionMatrix:
    """Classify every test image against the gallery and tabulate."""
    dataset = dataset or build_dataset(config)
    labels = [s.sensor_id for s in config.sensors]
    chunks, owners = [], []
    for sid in labels:
        test = dataset.data[sid].test
        for start in range(0, len(test), 25):
            chunks.append(test[start:start + 25])
            owners.append(sid)
    preds = _run(_identify_task, chunks, _context(config, dataset), jobs)
    pos = {s: i for i, s in enumerate(labels)}
    counts = [[0] * len(labels) for _ in labels]
    for sid, chunk in zip(owners, preds):
        for p in chunk:
            counts[pos[sid]][pos[p]] += 1
    return ConfusionMatrix(labels, counts)


def _spoof_tasks(config, dataset, source_id, target_id, method, snapshot_at=()):
    si, ti = config.sensor_index(source_id), config.sensor_index(target_id)
    if source_id == target_id:
        raise ValueError("source and target must differ")
    inputs = dataset.data[source_id].test[:config.spoof_count]
    if not inputs:
        raise EmptyInputError(f"sensor {source_id} has no test images to spoof")
    if method == "proposed" and not dataset.data[target_id].test:
        raise EmptyInputError(f"sensor {target_id} has no candidate images")
    traj_dir = None
    if config.save_trajectories and method == "proposed":
        traj_dir = Path(config.output_dir) / "trajectories"
        traj_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for i, x in enumerate(inputs):
        p = replace(config.perturb,
                    rng_seed=derive_seed(config.seed, "patch-sampling", si, ti, i),
                    patch=replace(config.perturb.patch,
                                  rng_seed=derive_seed(config.seed, "candidate-patches", si, ti, i)))
        traj = None if traj_dir is None else str(traj_dir / f"{source_id}_to_{target_id}_{i:04d}.csv")
        tasks.append((method, source_id, target_id, i, as_array(x), p, tuple(snapshot_at), traj))
    return tasks


def _report(source_id, target_id, method, records, max_iters):
    hits = sum(r["predicted"] == target_id for r in records)
    return SSRReport(source_id, target_id, method, len(records), hits, max_iters, records)


def run_spoof_experiment(config: ExperimentConfig, source_id: str, target_id: str,
                         method: str = "proposed", dataset: Dataset | None = None,
                         jobs: int | None = 1) -> SSRReport:
    """Spoof the source's test images as the target and count target hits."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    dataset = dataset or build_dataset(config)
    tasks = _spoof_tasks(config, dataset, source_id, target_id, method)
    out = _run(_spoof_task, tasks, _context(config, dataset, [target_id]), jobs)
    records = [r[0] for r in out]
    m = config.perturb.max_iters if method == "proposed" else None
    return _report(source_id, target_id, method, records, m)


def run_iteration_study(config: ExperimentConfig, source_id: str, target_id: str,
                        m_values: Sequence[int], dataset: Dataset | None = None,
                        jobs: int | None = 1) -> list[SSRReport]:
    """SSR of the proposed method at several iteration caps.

    Each image is attacked once with the largest cap, keeping a snapshot at
    every smaller cap. Because the patch sequence depends only on the seed,
    each snapshot is exactly the output a shorter run would have produced.
    """
    m_values = [int(m) for m in m_values]
    if not m_values:
        raise ValueError("m_values must not be empty")
    if m_values != sorted(m_values) or m_values[0] < 1:
        raise ValueError("m_values must be positive and sorted ascending")
    dataset = dataset or build_dataset(config)
    longest = replace(config, perturb=replace(config.perturb, max_iters=m_values[-1]))
    tasks = _spoof_tasks(longest, dataset, source_id, target_id, "proposed", snapshot_at=m_values)
    out = _run(_spoof_task, tasks, _context(config, dataset, [target_id]), jobs)
    return [_report(source_id, target_id, "proposed", [r[k] for r in out], m)
            for k, m in enumerate(m_values)]


def config_summary(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["sensors"] = [asdict(s) for s in config.sensors]
    return _json_safe(d)
