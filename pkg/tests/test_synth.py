import numpy as np
import pytest

from prnuspoof.errors import DimensionMismatchError
from prnuspoof.fingerprint import correlate
from prnuspoof.image import quantize
from prnuspoof.synth import (
    DEFAULT_READ_NOISE, SyntheticSensor, capture, capture_bank, make_scene, make_scene_bank,
)


def test_degenerate_sensor_returns_quantized_scene():
    sensor = SyntheticSensor.create("a", (20, 30), strength=1e-12, read_noise_sigma=0.0, rng_seed=1)
    scene = np.random.default_rng(0).uniform(0, 255, (20, 30))
    assert np.array_equal(capture(sensor, scene, 0).pixels, quantize(scene))


def test_zero_scene_stays_zero_without_read_noise():
    sensor = SyntheticSensor.create("a", (20, 30), strength=0.5, read_noise_sigma=0.0, rng_seed=1)
    assert np.all(capture(sensor, np.zeros((20, 30)), 3).pixels == 0)


def test_capture_deterministic_and_shot_dependent():
    sensor = SyntheticSensor.create("a", (24, 24), rng_seed=2)
    scene = make_scene_bank(1, (24, 24), 9)[0]
    a, b = capture(sensor, scene, 5), capture(sensor, scene, 5)
    assert a == b
    assert capture(sensor, scene, 6) != a
    px = a.pixels
    assert np.array_equal(px, np.round(px)) and px.min() >= 0 and px.max() <= 255


def test_capture_dims_checked():
    sensor = SyntheticSensor.create("a", (8, 8))
    with pytest.raises(DimensionMismatchError):
        capture(sensor, np.zeros((8, 9)), 0)


def test_sensor_validation():
    with pytest.raises(ValueError):
        SyntheticSensor.create("a", (8, 8), strength=0.0)
    with pytest.raises(ValueError):
        SyntheticSensor("a", np.zeros((4, 4)), 0.01, -1.0, 0)
    with pytest.raises(ValueError):
        SyntheticSensor("a", np.zeros(4), 0.01, 1.0, 0)


def test_field_statistics_and_defaults():
    sensor = SyntheticSensor.create("a", (120, 160), strength=0.02, rng_seed=3)
    assert sensor.read_noise_sigma == DEFAULT_READ_NOISE
    assert sensor.prnu_field.std() == pytest.approx(0.02, rel=0.02)
    assert abs(sensor.prnu_field.mean()) < 0.001


def test_independent_fields_are_near_orthogonal():
    fields = [SyntheticSensor.create(f"s{i}", (120, 160), rng_seed=i).prnu_field for i in range(6)]
    for i in range(6):
        for j in range(i + 1, 6):
            assert abs(correlate(fields[i], fields[j])) < 0.05


def test_sensor_file_round_trip(tmp_path):
    s = SyntheticSensor.create("cam-7", (5, 6), strength=0.03, read_noise_sigma=1.5, rng_seed=2**63 + 5)
    s.save(tmp_path / "s.synk")
    assert (tmp_path / "s.synk").read_bytes()[:5] == b"SYNK1"
    t = SyntheticSensor.load(tmp_path / "s.synk")
    assert (t.sensor_id, t.strength, t.read_noise_sigma, t.rng_seed) == ("cam-7", 0.03, 1.5, 2**63 + 5)
    assert np.array_equal(t.prnu_field, s.prnu_field)
    (tmp_path / "bad.synk").write_bytes(b"PRNU1" + (tmp_path / "s.synk").read_bytes()[5:])
    with pytest.raises(ValueError):
        SyntheticSensor.load(tmp_path / "bad.synk")


def test_scene_bank_contract():
    one = make_scene_bank(1, (120, 160), 0)
    assert len(one) == 1 and 80 <= one[0].pixels.mean() <= 180
    a = make_scene_bank(4, (40, 50), 11)
    b = make_scene_bank(4, (40, 50), 11)
    c = make_scene_bank(4, (40, 50), 12)
    assert all(x == y for x, y in zip(a, b))
    assert any(x != y for x, y in zip(a, c))
    assert len({x.pixels.tobytes() for x in a}) == 4
    with pytest.raises(ValueError):
        make_scene_bank(0, (8, 8), 0)


def test_scene_means_mid_range():
    means = [s.pixels.mean() for s in make_scene_bank(30, (120, 160), 4)]
    assert 80 <= min(means) and max(means) <= 180


def test_scene_has_dark_pupil():
    # pupil radius is at least 10 px at this size, i.e. about 1.6% of the frame
    for seed in range(5):
        scene = make_scene((120, 160), np.random.default_rng(seed))
        assert np.mean(scene < 60) > 0.015


def test_capture_bank_shapes():
    sensor = SyntheticSensor.create("a", (16, 24), rng_seed=1)
    bank = capture_bank(sensor, 3, 7, shot_offset=10)
    scenes = make_scene_bank(3, (16, 24), 7)
    assert [im.shape for im in bank] == [(16, 24)] * 3
    assert bank[2] == capture(sensor, scenes[2], 12)
