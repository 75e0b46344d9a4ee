import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from prnuspoof.cli import main
from prnuspoof.fingerprint import ReferencePattern
from prnuspoof.image import load_image

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    """Two synthetic sensors with 60 captures each plus their estimated patterns."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "gen", "--out", str(root / "caps"), "--count", "60", "--seed", "3"]) == 0
    for sid in ("s0", "s1"):
        train = root / "train" / sid
        train.mkdir(parents=True)
        for p in sorted((root / "caps" / sid).glob("*.pgm"))[:55]:
            (train / p.name).write_bytes(p.read_bytes())
        assert main(["estimate", "--sensor-dir", str(train), "--out", str(root / "gallery" / f"{sid}.prnu")]) == 0
    return root


def held_out(root, sid, k=0):
    return sorted((root / "caps" / sid).glob("*.pgm"))[55 + k]


def test_synth_gen_layout(data):
    names = sorted(p.name for p in (data / "caps").iterdir())
    assert names == ["s0", "s0.synk", "s1", "s1.synk"]
    assert len(list((data / "caps" / "s0").glob("*.pgm"))) == 60
    assert load_image(held_out(data, "s0")).shape == (120, 160)


def test_estimate_is_reproducible(data, tmp_path):
    out = tmp_path / "again.prnu"
    assert main(["estimate", "--sensor-dir", str(data / "train" / "s0"), "--out", str(out)]) == 0
    assert out.read_bytes() == (data / "gallery" / "s0.prnu").read_bytes()
    p = ReferencePattern.load(out)
    assert p.sensor_id == "s0" and p.train_count == 55 and p.dims == (120, 160)


def test_estimate_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["estimate", "--sensor-dir", str(tmp_path / "empty"), "--out", str(tmp_path / "x.prnu")]) == 1
    assert "no training images" in capsys.readouterr().err


@pytest.mark.parametrize("sid", ["s0", "s1"])
def test_identify_attributes_held_out_image(data, capsys, sid):
    assert main(["identify", "--image", str(held_out(data, sid, 1)), "--gallery-dir", str(data / "gallery")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["predicted"] == sid
    assert [s["sensor_id"] for s in out["scores"]] == ["s0", "s1"]


def test_identify_single_pattern_gallery(data, tmp_path, capsys):
    (tmp_path / "g").mkdir()
    (tmp_path / "g" / "s1.prnu").write_bytes((data / "gallery" / "s1.prnu").read_bytes())
    assert main(["identify", "--image", str(held_out(data, "s0")), "--gallery-dir", str(tmp_path / "g")]) == 0
    assert json.loads(capsys.readouterr().out)["predicted"] == "s1"


def test_identify_missing_gallery(data, tmp_path, capsys):
    assert main(["identify", "--image", str(held_out(data, "s0")), "--gallery-dir", str(tmp_path / "nope")]) == 1
    assert capsys.readouterr().err.startswith("prnuspoof: error:")


def test_spoof_baseline1_with_zero_target_is_identity(data, tmp_path):
    ReferencePattern(np.zeros((120, 160)), "zero", 1).save(tmp_path / "zero.prnu")
    src = held_out(data, "s0")
    rc = main(["spoof", "--method", "baseline1", "--image", str(src),
               "--candidate-gallery-dir", str(data / "caps" / "s1"),
               "--source-pattern", str(data / "gallery" / "s0.prnu"),
               "--target-pattern", str(tmp_path / "zero.prnu"),
               "--out", str(tmp_path / "y.pgm"), "--result", str(tmp_path / "r.json")])
    assert rc == 0
    assert np.array_equal(load_image(tmp_path / "y.pgm"), load_image(src))
    assert json.loads((tmp_path / "r.json").read_text())["psnr"] is None


def test_spoof_requires_target_pattern(data, tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["spoof", "--image", str(held_out(data, "s0")), "--candidate-gallery-dir", str(data),
              "--source-pattern", str(data / "gallery" / "s0.prnu"), "--out", str(tmp_path / "y.pgm")])
    assert e.value.code == 2


def test_spoof_proposed_end_to_end(data, tmp_path):
    # candidates are s1's held-out captures, never its training images
    cands = tmp_path / "cands"
    cands.mkdir()
    for k in range(5):
        p = held_out(data, "s1", k)
        (cands / p.name).write_bytes(p.read_bytes())
    # held-out capture 2 stops at the iteration cap with seed 1; capture 0 reaches the margin
    args = ["spoof", "--image", str(held_out(data, "s0", 0)), "--candidate-gallery-dir", str(cands),
            "--source-pattern", str(data / "gallery" / "s0.prnu"),
            "--target-pattern", str(data / "gallery" / "s1.prnu"),
            "--gallery-dir", str(data / "gallery"), "--trajectory", str(tmp_path / "t.csv"), "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a.png"), "--result", str(tmp_path / "a.json")]) == 0
    r = json.loads((tmp_path / "a.json").read_text())
    assert r["succeeded"] and r["predicted"] == "s1"
    assert 1 <= r["iterations_used"] <= 3000 and r["psnr"] > 30
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,phi_target,phi_source" and len(lines) == r["iterations_used"] + 1
    assert main(args + ["--out", str(tmp_path / "b.png"), "--result", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def test_spoof_cap_without_margin_is_reported(data, tmp_path):
    cands = tmp_path / "cands"
    cands.mkdir()
    for k in range(5):
        p = held_out(data, "s1", k)
        (cands / p.name).write_bytes(p.read_bytes())
    rc = main(["spoof", "--image", str(held_out(data, "s0", 2)), "--candidate-gallery-dir", str(cands),
               "--source-pattern", str(data / "gallery" / "s0.prnu"),
               "--target-pattern", str(data / "gallery" / "s1.prnu"), "--seed", "1",
               "--out", str(tmp_path / "y.pgm"), "--result", str(tmp_path / "r.json")])
    assert rc == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert not r["succeeded"] and r["iterations_used"] == 3000


def test_experiment_identify_from_config(tmp_path, capsys):
    out = tmp_path / "res"
    rc = main(["experiment", "--kind", "identify", "--config", str(ROOT / "configs" / "synthetic_2.toml"),
               "--output-dir", str(out), "--jobs", "1"])
    assert rc == 0
    printed = capsys.readouterr().out.split()
    assert str(out / "confusion.json") in printed
    cm = json.loads((out / "confusion.json").read_text())
    assert [sum(r) for r in cm["counts"]] == [20, 20]
    assert json.loads((out / "config.json").read_text())["seed"] == 7


def test_experiment_spoof_report(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 2\n[experiment]\ntrain_count = 20\ntest_count = 4\nspoof_count = 2\n'
                   'working_dims = [48, 64]\n[perturb]\nmax_iters = 30\n'
                   '[[sensors]]\nid = "a"\n[[sensors]]\nid = "b"\n')
    rc = main(["experiment", "--kind", "spoof", "--config", str(cfg), "--output-dir", str(tmp_path / "o"),
               "--method", "baseline1"])
    assert rc == 0
    (rep,) = json.loads((tmp_path / "o" / "ssr_baseline1.json").read_text())
    assert rep["ssr"] == 100.0 * rep["n_classified_as_target"] / rep["n_attempted"]
    assert (rep["source_id"], rep["target_id"], rep["n_attempted"]) == ("a", "b", 2)


def test_experiment_bad_kind():
    with pytest.raises(SystemExit) as e:
        main(["experiment", "--kind", "bogus"])
    assert e.value.code == 2


def test_bad_config_is_a_runtime_error(tmp_path, capsys):
    (tmp_path / "c.toml").write_text("nonsense = 1\n")
    assert main(["experiment", "--kind", "identify", "--config", str(tmp_path / "c.toml")]) == 1
    assert "nonsense" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "prnuspoof", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("estimate", "identify", "spoof", "experiment", "synth"):
        assert cmd in proc.stdout
