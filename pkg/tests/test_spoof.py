import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from prnuspoof.denoise import DenoiseParams, denoise, residual
from prnuspoof.errors import DegenerateScoreError, DimensionMismatchError, EmptyInputError
from prnuspoof.fingerprint import ReferencePattern, SensorGallery, classify, correlate, estimate_reference
from prnuspoof.image import Image
from prnuspoof.spoof import (
    PatchSpec, PerturbParams, baseline1_inject, baseline2_substitute, baseline_denoised_inject,
    patch_grid, perturb, select_candidate, visited_mask, write_trajectory_csv,
)
from prnuspoof.synth import SyntheticSensor, capture_bank

FIXTURES = Path(__file__).parent / "fixtures"


# ------------------------------------------------------------ candidate selection

def _blocks(means, patch=10):
    """A 10*len(means) x 10 image whose aligned 10x10 patches have the given means."""
    return np.repeat(np.asarray(means, dtype=float), patch)[:, None] * np.ones((1, patch))


def _toy_gallery():
    x = np.array([10.0, 20.0, 30.0])
    u = (x - x.mean()) / np.linalg.norm(x - x.mean())
    perp = np.array([1.0, -2.0, 1.0]) / np.sqrt(6)
    pos = 50 + 10 * (0.9 * u + np.sqrt(1 - 0.81) * perp)
    neg = 50 + 10 * (-0.9 * u + np.sqrt(1 - 0.81) * perp)
    return x, pos, neg


def test_toy_profiles_have_the_intended_correlations():
    x, pos, neg = _toy_gallery()
    assert np.corrcoef(x, pos)[0, 1] == pytest.approx(0.9, abs=1e-12)
    assert np.corrcoef(x, neg)[0, 1] == pytest.approx(-0.9, abs=1e-12)


@pytest.mark.parametrize("order,want", [((1, 2), 0), ((2, 1), 1)])
def test_select_candidate_three_patch_toy(order, want):
    x, pos, neg = _toy_gallery()
    profiles = {1: pos, 2: neg}
    gallery = [_blocks(profiles[k]) for k in order]
    cand, idx = select_candidate(_blocks(x), gallery, PatchSpec(count=3, rng_seed=4))
    assert idx == want
    assert np.array_equal(np.asarray(cand), gallery[want])


def test_select_candidate_prefers_copy_of_input():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 255, (40, 60))
    gallery = [rng.uniform(0, 255, (40, 60)) for _ in range(5)]
    gallery.insert(3, x.copy())
    _, idx = select_candidate(x, gallery, PatchSpec(count=8, rng_seed=1))
    assert idx == 3


def test_select_candidate_single_and_ties():
    x = np.random.default_rng(1).uniform(0, 255, (40, 40))
    assert select_candidate(x, [np.zeros((40, 40))])[1] == 0
    # constant gallery images have undefined correlation, scored 0, so the first wins
    assert select_candidate(x, [np.zeros((40, 40)), np.ones((40, 40))])[1] == 0
    img = Image(x)
    cand, _ = select_candidate(x, [img])
    assert cand is img


def test_select_candidate_errors():
    x = np.zeros((30, 10))
    with pytest.raises(EmptyInputError):
        select_candidate(x, [])
    with pytest.raises(DimensionMismatchError):
        select_candidate(x, [np.zeros((30, 20))])
    with pytest.raises(ValueError, match="positions"):
        select_candidate(x, [x], PatchSpec(count=4))
    with pytest.raises(ValueError, match="fit"):
        select_candidate(np.zeros((5, 5)), [np.zeros((5, 5))])


def test_patch_spec_validation():
    for bad in (dict(count=0), dict(patch_h=0), dict(patch_w=-1)):
        with pytest.raises(ValueError):
            PatchSpec(**bad)


def test_partial_border_patches():
    assert patch_grid((25, 30), 10, 10) == (3, 3)
    m = visited_mask((25, 30), [8], 10, 10)
    assert m.sum() == 5 * 10 and m[24, 29] and not m[19, 29]


# ------------------------------------------------------------ perturbation

@pytest.fixture(scope="module")
def pair():
    """Two synthetic sensors at 64x80 with galleries and held-out images."""
    dims = (64, 80)
    sensors = [SyntheticSensor.create(s, dims, strength=0.004, rng_seed=i) for i, s in enumerate("AB")]
    banks = [capture_bank(s, 70, 100 + i) for i, s in enumerate(sensors)]
    patterns = [estimate_reference(b[:55], sensor_id=s.sensor_id) for s, b in zip(sensors, banks)]
    return {"A": patterns[0], "B": patterns[1], "a_test": banks[0][55:], "b_test": banks[1][55:]}


def _phi(img, pattern):
    return correlate(residual(img).values, pattern.values)


def test_perturb_param_validation():
    for bad in (dict(alpha=0), dict(alpha=1), dict(eta=0), dict(max_iters=0)):
        with pytest.raises(ValueError):
            PerturbParams(**bad)


def test_identical_candidate_is_a_fixed_point(pair):
    x = pair["a_test"][0]
    res = perturb(x, x, pair["A"], pair["B"], PerturbParams(max_iters=25))
    assert res.iterations_used == 25 and not res.succeeded
    assert res.perturbed == x
    assert all(p.phi_target == p.phi_target_rejected for p in res.trajectory)


def test_single_iteration_touches_one_patch(pair):
    x, cand = pair["a_test"][1], pair["b_test"][0]
    res = perturb(x, cand, pair["A"], pair["B"], PerturbParams(max_iters=1, rng_seed=5))
    assert res.iterations_used == 1 and len(res.visited) == 1
    changed = np.asarray(res.perturbed) != np.asarray(x)
    inside = visited_mask(x.shape, res.visited, 10, 10)
    assert not np.any(changed & ~inside)
    assert np.array_equal(changed, inside & (np.asarray(cand) != np.asarray(x)))


def test_locality_bounds_and_selection(pair):
    x, cand = pair["a_test"][2], pair["b_test"][1]
    p = PerturbParams(alpha=0.5, max_iters=60, rng_seed=6)
    res = perturb(x, cand, pair["A"], pair["B"], p)
    y, x0 = np.asarray(res.perturbed), np.asarray(x)
    outside = ~visited_mask(x.shape, res.visited, 10, 10)
    assert np.array_equal(y[outside], x0[outside])
    assert y.min() >= 0 and y.max() <= 255
    assert res.iterations_used <= p.max_iters
    assert all(t.phi_target >= t.phi_target_rejected for t in res.trajectory)
    assert [t.iteration for t in res.trajectory] == list(range(1, res.iterations_used + 1))


def test_clamping_at_extremes(pair):
    x = pair["a_test"][3]
    # stepping away from an all-255 candidate drives pixels below zero before clamping
    res = perturb(x, np.full(x.shape, 255.0), pair["A"], pair["B"], PerturbParams(alpha=0.99, max_iters=30))
    y = np.asarray(res.perturbed)
    assert y.min() >= 0 and y.max() <= 255


def test_perturb_is_deterministic(pair):
    args = (pair["a_test"][4], pair["b_test"][2], pair["A"], pair["B"], PerturbParams(max_iters=40, rng_seed=9))
    r1, r2 = perturb(*args), perturb(*args)
    assert r1.perturbed == r2.perturbed
    assert r1.trajectory == r2.trajectory and r1.visited == r2.visited
    r3 = perturb(*args[:4], PerturbParams(max_iters=40, rng_seed=10))
    assert r3.visited != r1.visited


def test_snapshot_equals_shorter_run(pair):
    x, cand = pair["a_test"][5], pair["b_test"][3]
    p = PerturbParams(max_iters=50, rng_seed=12)
    long_run = perturb(x, cand, pair["A"], pair["B"], p, snapshot_at=(10, 30))
    assert not long_run.succeeded
    for m in (10, 30):
        short = perturb(x, cand, pair["A"], pair["B"], replace(p, max_iters=m))
        assert short.perturbed == long_run.snapshots[m]
        assert short.visited == long_run.visited[:m]


def test_degenerate_source_score_rejected(pair):
    x, cand = pair["a_test"][0], pair["b_test"][0]
    flipped = ReferencePattern(-pair["A"].values, "A", 55)
    with pytest.raises(DegenerateScoreError):
        perturb(x, cand, flipped, pair["B"])
    zero = ReferencePattern(np.zeros(x.shape), "A", 55)
    with pytest.raises(DegenerateScoreError):
        perturb(x, cand, zero, pair["B"])


def test_perturb_dims_checked(pair):
    x = pair["a_test"][0]
    with pytest.raises(DimensionMismatchError):
        perturb(x, np.zeros((10, 10)), pair["A"], pair["B"])


def test_trajectory_csv(pair, tmp_path):
    res = perturb(pair["a_test"][6], pair["b_test"][4], pair["A"], pair["B"], PerturbParams(max_iters=5))
    write_trajectory_csv(res, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iteration", "phi_target", "phi_source"]
    assert len(rows) == 6 and float(rows[5][1]) == res.trajectory[-1].phi_target
    quiet = perturb(pair["a_test"][6], pair["b_test"][4], pair["A"], pair["B"], PerturbParams(max_iters=5),
                    record_trajectory=False)
    assert quiet.trajectory is None and quiet.perturbed == res.perturbed
    with pytest.raises(ValueError):
        write_trajectory_csv(quiet, tmp_path / "q.csv")


def test_synthetic_spoof_end_to_end():
    dims = (120, 160)
    sensors = [SyntheticSensor.create(s, dims, rng_seed=40 + i) for i, s in enumerate("AB")]
    banks = [capture_bank(s, 60, 200 + i) for i, s in enumerate(sensors)]
    gallery = SensorGallery(estimate_reference(b[:55], sensor_id=s.sensor_id) for s, b in zip(sensors, banks))
    x = banks[0][55]
    assert classify(x, gallery)[0] == "A"
    cand, _ = select_candidate(x, banks[1][55:], PatchSpec(rng_seed=3))
    res = perturb(x, cand, gallery["A"], gallery["B"], PerturbParams(rng_seed=3))
    assert res.succeeded
    assert classify(res.perturbed, gallery)[0] == "B"
    crit = (_phi(res.perturbed, gallery["B"]) - _phi(res.perturbed, gallery["A"])) / res.initial_source_score
    assert crit > 0.1
    assert res.initial_source_score == pytest.approx(_phi(x, gallery["A"]), abs=1e-12)


# ------------------------------------------------------------ baselines

def test_baseline1_examples():
    x = np.random.default_rng(2).uniform(0, 255, (6, 6))
    assert baseline1_inject(x, np.zeros((6, 6))) == Image(x)
    assert baseline1_inject(x, np.ones((6, 6)), gamma=0.0) == Image(x)
    assert baseline1_inject(np.array([[100.0]]), np.array([[0.02]])).pixels[0, 0] == pytest.approx(102.0, abs=1e-12)
    assert baseline1_inject(np.array([[200.0]]), np.array([[0.5]])).pixels[0, 0] == 255.0


def test_baseline2_examples():
    x = np.random.default_rng(3).uniform(0, 255, (6, 6))
    k = np.random.default_rng(4).normal(size=(6, 6))
    assert baseline2_substitute(x, k, k) == Image(x)
    assert np.allclose(baseline2_substitute(x, k, -k, gamma=0.0, beta=0.0).pixels, x)
    out = baseline2_substitute(np.array([[100.0]]), np.array([[0.04]]), np.array([[0.02]]))
    assert out.pixels[0, 0] == pytest.approx(99.5, abs=1e-12)
    with pytest.raises(ValueError):
        baseline2_substitute(x, np.zeros((6, 6)), np.zeros((6, 6)))
    with pytest.raises(DimensionMismatchError):
        baseline2_substitute(x, k, np.zeros((5, 5)))


def test_baseline_pattern_objects_accepted():
    x = np.full((4, 4), 100.0)
    pat = ReferencePattern(np.full((4, 4), 0.01), "t", 1)
    assert baseline1_inject(x, pat).pixels[0, 0] == pytest.approx(101.0)
    with pytest.raises(DimensionMismatchError):
        baseline1_inject(np.zeros((3, 3)), pat)


def test_denoised_inject_examples():
    x = np.random.default_rng(5).uniform(20, 230, (32, 32))
    np.testing.assert_array_equal(baseline_denoised_inject(x, np.ones((32, 32)), gamma=0.0).pixels,
                                  np.clip(denoise(x), 0, 255))
    const = baseline_denoised_inject(np.full((32, 32), 90.0), np.zeros((32, 32)))
    assert np.max(np.abs(const.pixels - 90.0)) < 1e-6


def test_denoised_inject_against_oracle_snapshot():
    img = np.load(FIXTURES / "denoise16_input.npy")
    f_img = np.load(FIXTURES / "denoise16_levels2.npy")
    k = np.random.default_rng(6).normal(0, 2, img.shape)
    got = baseline_denoised_inject(img, k, 1.0, DenoiseParams(levels=2))
    np.testing.assert_allclose(got.pixels, np.clip(f_img + k, 0, 255), atol=1e-10)
