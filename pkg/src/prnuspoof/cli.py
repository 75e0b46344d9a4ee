"""Command-line front end: ``prnuspoof <command> ...``.

Machine-readable output goes to stdout or files, diagnostics to stderr.
Exit status is 0 on success, 1 on a runtime error and 2 on bad usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import ConfigError, load_config
from .denoise import residual_batch
from .errors import EmptyInputError, PrnuError
from .fingerprint import ReferencePattern, SensorGallery, classify, classify_residual, estimate_reference
from .image import as_array, list_images, load_image, save_image, save_pgm
from .rng import derive_seed
from .spoof import (
    baseline1_inject, baseline2_substitute, baseline_denoised_inject, perturb, select_candidate,
    write_trajectory_csv,
)
from .synth import SyntheticSensor, capture_bank

log = logging.getLogger("prnuspoof")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # shared by the top-level parser and every subcommand so flags work in either position
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=d(None), help="TOML configuration file")
    p.add_argument("--seed", type=int, default=d(None), help="64-bit seed for every random choice")
    p.add_argument("--jobs", type=int, default=d(None), help="worker processes (default: all cores)")
    p.add_argument("--verbose", "-v", action="count", default=d(0))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prnuspoof", parents=[_global_flags(False)],
                                     description="PRNU sensor identification and spoofing")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_flags(True)]

    p = sub.add_parser("estimate", parents=common, help="estimate a reference pattern")
    p.add_argument("--sensor-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sensor-id", help="defaults to the directory name")

    p = sub.add_parser("identify", parents=common, help="attribute an image to a sensor")
    p.add_argument("--image", required=True)
    p.add_argument("--gallery-dir", required=True)

    p = sub.add_parser("spoof", parents=common, help="make an image look like another sensor's")
    p.add_argument("--image", required=True)
    p.add_argument("--candidate-gallery-dir", required=True)
    p.add_argument("--source-pattern", required=True)
    p.add_argument("--target-pattern", required=True)
    p.add_argument("--out", required=True, help="perturbed image (.pgm or .png)")
    p.add_argument("--method", choices=harness.METHODS, default=None)
    p.add_argument("--result", help="write the result JSON here instead of stdout")
    p.add_argument("--gallery-dir", help="score the output against this gallery")
    p.add_argument("--trajectory", help="CSV of per-iteration scores")

    p = sub.add_parser("experiment", parents=common, help="run a reproducible experiment")
    p.add_argument("--kind", required=True, choices=("identify", "spoof", "iterations"))
    p.add_argument("--output-dir")
    p.add_argument("--method", choices=harness.METHODS, default=None)
    p.add_argument("--save-trajectories", action="store_true")

    p = sub.add_parser("synth", parents=common, help="synthetic sensor data")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)
    g = synth_sub.add_parser("gen", parents=common, help="write captures from synthetic sensors")
    g.add_argument("--out", required=True)
    g.add_argument("--sensors", type=int, default=2)
    g.add_argument("--count", type=int, default=60, help="captures per sensor")
    g.add_argument("--strength", type=float, default=None)
    g.add_argument("--read-noise", type=float, default=None)
    g.add_argument("--dims", type=int, nargs=2, metavar=("H", "W"), default=None)
    return parser


def _load_dir_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return [load_image(p) for p in list_images(directory)]


def cmd_estimate(args, cfg) -> int:
    images = _load_dir_images(args.sensor_dir)
    if not images:
        raise EmptyInputError("no training images")
    sid = args.sensor_id or Path(args.sensor_dir).resolve().name
    pattern = estimate_reference(images, cfg.experiment.denoise, sid)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    pattern.save(args.out)
    log.info("wrote %s from %d images", args.out, len(images))
    return 0


def cmd_identify(args, cfg) -> int:
    gallery = SensorGallery.load_dir(args.gallery_dir)
    label, scores = classify(load_image(args.image), gallery, cfg.experiment.denoise)
    print(json.dumps({"predicted": label,
                      "scores": [{"sensor_id": s.sensor_id, "value": s.value} for s in scores]}))
    return 0


def cmd_spoof(args, cfg) -> int:
    exp = cfg.experiment
    method = args.method or cfg.method
    x = load_image(args.image)
    source = ReferencePattern.load(args.source_pattern)
    target = ReferencePattern.load(args.target_pattern)
    out = {"method": method, "seed": exp.seed}
    if method == "proposed":
        candidates = _load_dir_images(args.candidate_gallery_dir)
        params = replace(exp.perturb, rng_seed=exp.seed, patch=replace(exp.perturb.patch, rng_seed=exp.seed))
        cand, idx = select_candidate(x, candidates, params.patch)
        result = perturb(x, cand, source, target, params, exp.denoise,
                         record_trajectory=args.trajectory is not None)
        if args.trajectory:
            write_trajectory_csv(result, args.trajectory)
        y = result.perturbed
        out.update(result.to_dict(), candidate_index=idx,
                   candidate=str(list_images(args.candidate_gallery_dir)[idx]))
    elif method == "baseline1":
        y = baseline1_inject(x, target, exp.gamma)
    elif method == "baseline2":
        y = baseline2_substitute(x, source, target, exp.gamma, exp.beta)
    else:
        y = baseline_denoised_inject(x, target, exp.gamma, exp.denoise)
    save_image(y, args.out)
    if args.gallery_dir:
        gallery = SensorGallery.load_dir(args.gallery_dir)
        label, scores = classify_residual(residual_batch(as_array(y)[None], exp.denoise)[0], gallery)
        out["predicted"] = label
        out["final_scores"] = [{"sensor_id": s.sensor_id, "value": s.value} for s in scores]
    out["psnr"] = harness.psnr(x, y)
    text = harness.to_json(out)
    if args.result:
        Path(args.result).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(args, cfg) -> int:
    exp = cfg.experiment
    if args.output_dir:
        exp = replace(exp, output_dir=args.output_dir)
    if args.save_trajectories:
        exp = replace(exp, save_trajectories=True)
    jobs = cfg.jobs if args.jobs is None else args.jobs
    out_dir = Path(exp.output_dir)
    dataset = harness.build_dataset(exp)
    written = []
    if args.kind == "identify":
        cm = harness.run_identification(exp, dataset, jobs)
        written += harness.write_report(out_dir, "confusion", cm)
    elif args.kind == "spoof":
        method = args.method or cfg.method
        reports = [harness.run_spoof_experiment(exp, s, t, method, dataset, jobs)
                   for s, t in exp.spoof_pairs()]
        written += harness.write_report(out_dir, f"ssr_{method}", reports)
    else:
        s, t = exp.spoof_pairs()[0]
        reports = harness.run_iteration_study(exp, s, t, cfg.m_values, dataset, jobs)
        written += harness.write_report(out_dir, "iterations", reports)
    cfg_path = out_dir / "config.json"
    cfg_path.write_text(harness.to_json(harness.config_summary(exp)))
    for p in [*written, cfg_path]:
        print(p)
    return 0


def cmd_synth_gen(args, cfg) -> int:
    exp = cfg.experiment
    dims = tuple(args.dims) if args.dims else exp.working_dims
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(args.sensors):
        spec = exp.sensors[i] if i < len(exp.sensors) else harness.SensorSpec(f"s{i}")
        sensor = SyntheticSensor.create(
            spec.sensor_id, dims,
            spec.strength if args.strength is None else args.strength,
            spec.read_noise_sigma if args.read_noise is None else args.read_noise,
            derive_seed(exp.seed, "synth-sensor", i))
        sensor.save(root / f"{sensor.sensor_id}.synk")
        sdir = root / sensor.sensor_id
        sdir.mkdir(exist_ok=True)
        for k, img in enumerate(capture_bank(sensor, args.count, derive_seed(exp.seed, "synth-scenes", i))):
            save_pgm(img, sdir / f"{k:04d}.pgm")
        print(sdir)
    return 0


COMMANDS = {"estimate": cmd_estimate, "identify": cmd_identify, "spoof": cmd_spoof,
            "experiment": cmd_experiment, "synth": cmd_synth_gen}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](args, cfg)
    except (PrnuError, ConfigError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"prnuspoof: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
