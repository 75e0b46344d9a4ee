"""TOML experiment configuration.

Layout (every table and key optional)::

    seed = 0
    jobs = 4

    [denoise]      levels, noise_variance, window_sizes, wavelet
    [perturb]      alpha, eta, max_iters
    [patch]        count, patch_h, patch_w
    [experiment]   train_count, test_count, spoof_count, candidate_count,
                   working_dims, output_dir, pairs, gamma, beta,
                   subject_pattern, save_trajectories, m_values, method

    [[sensors]]    id, and either directory or strength/read_noise_sigma

Unknown keys are errors so a typo never silently falls back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli

from .denoise import DenoiseParams
from .harness import METHODS, ExperimentConfig, SensorSpec, default_sensors
from .spoof import PatchSpec, PerturbParams
from .synth import DEFAULT_READ_NOISE, DEFAULT_STRENGTH

_TOP = {"seed", "jobs", "denoise", "perturb", "patch", "experiment", "sensors"}
_DENOISE = {"wavelet", "levels", "noise_variance", "window_sizes"}
_PERTURB = {"alpha", "eta", "max_iters"}
_PATCH = {"count", "patch_h", "patch_w"}
_EXPERIMENT = {"train_count", "test_count", "spoof_count", "candidate_count", "working_dims",
               "output_dir", "pairs", "gamma", "beta", "subject_pattern", "save_trajectories",
               "m_values", "method"}
_SENSOR = {"id", "directory", "strength", "read_noise_sigma"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    jobs: int | None = None
    m_values: tuple[int, ...] = (3000, 6000)
    method: str = "proposed"

    @property
    def seed(self) -> int:
        return self.experiment.seed

    def with_seed(self, seed: int) -> "CliConfig":
        return replace(self, experiment=replace(self.experiment, seed=int(seed)))


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_config(doc: dict, base_dir: Path | None = None) -> CliConfig:
    """Build a :class:`CliConfig` from an already parsed TOML document."""
    _check_keys(doc, _TOP, "config")
    den = doc.get("denoise", {})
    per = doc.get("perturb", {})
    pat = doc.get("patch", {})
    exp = dict(doc.get("experiment", {}))
    _check_keys(den, _DENOISE, "[denoise]")
    _check_keys(per, _PERTURB, "[perturb]")
    _check_keys(pat, _PATCH, "[patch]")
    _check_keys(exp, _EXPERIMENT, "[experiment]")

    try:
        dp = DenoiseParams(**{k: tuple(v) if k == "window_sizes" else v for k, v in den.items()})
        pp = PerturbParams(**per, patch=PatchSpec(**pat))
        sensors = []
        for i, s in enumerate(doc.get("sensors", [])):
            _check_keys(s, _SENSOR, f"[[sensors]] #{i + 1}")
            if "id" not in s:
                raise ConfigError(f"[[sensors]] #{i + 1} needs an id")
            directory = s.get("directory")
            if directory is not None and base_dir is not None:
                directory = str((base_dir / directory).resolve())
            sensors.append(SensorSpec(s["id"], directory, s.get("strength", DEFAULT_STRENGTH),
                                      s.get("read_noise_sigma", DEFAULT_READ_NOISE)))
        m_values = tuple(int(m) for m in exp.pop("m_values", (3000, 6000)))
        method = exp.pop("method", "proposed")
        if method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if "working_dims" in exp:
            exp["working_dims"] = tuple(exp["working_dims"])
        if "pairs" in exp:
            exp["pairs"] = tuple(tuple(p) for p in exp["pairs"])
        ec = ExperimentConfig(sensors=tuple(sensors) or default_sensors(), perturb=pp, denoise=dp,
                              seed=int(doc.get("seed", 0)), **exp)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    jobs = doc.get("jobs")
    return CliConfig(ec, None if jobs is None else int(jobs), m_values, method)


def load_config(path=None) -> CliConfig:
    """Read a TOML file; no path gives the built-in defaults."""
    if path is None:
        return CliConfig()
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            doc = tomli.load(fh)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return parse_config(doc, path.parent)
