"""Walk through attribution and one spoofing attack on synthetic sensors.

    python3 demos/attribute_and_spoof.py [--seed 0]

Two sensors are simulated at 120x160, a reference pattern is estimated from
55 captures of each, a held-out capture of sensor A is attributed, and then
perturbed until the classifier names sensor B instead.  The three baselines
are run on the same image for comparison.
"""
import argparse

from prnuspoof import (
    PatchSpec, PerturbParams, SensorGallery, SyntheticSensor, baseline1_inject, baseline2_substitute,
    baseline_denoised_inject, capture_bank, classify, estimate_reference, perturb, select_candidate,
)
from prnuspoof.harness import psnr
from prnuspoof.rng import derive_seed


def show(label, img, gallery):
    pred, scores = classify(img, gallery)
    detail = "  ".join(f"{s.sensor_id}={s.value:+.4f}" for s in scores)
    print(f"{label:<22} -> {pred}   {detail}")
    return pred


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    seed = ap.parse_args().seed

    sensors = [SyntheticSensor.create(sid, (120, 160), rng_seed=derive_seed(seed, "synth-sensor", i))
               for i, sid in enumerate("AB")]
    banks = [capture_bank(s, 65, derive_seed(seed, "synth-scenes", i)) for i, s in enumerate(sensors)]
    gallery = SensorGallery(estimate_reference(b[:55], sensor_id=s.sensor_id) for s, b in zip(sensors, banks))
    print(f"reference patterns estimated from 55 captures each; gallery {gallery.sensor_ids}\n")

    x = banks[0][55]
    show("held-out capture of A", x, gallery)

    # candidates come from B's held-out captures, not from its training set
    patch = PatchSpec(rng_seed=seed)
    cand, idx = select_candidate(x, banks[1][56:], patch)
    print(f"\ncandidate: B capture #{56 + idx}")
    result = perturb(x, cand, gallery["A"], gallery["B"], PerturbParams(patch=patch, rng_seed=seed))
    first, last = result.trajectory[0], result.trajectory[-1]
    print(f"iterations {result.iterations_used}, reached margin: {result.succeeded}")
    print(f"phi_target {first.phi_target:+.4f} -> {last.phi_target:+.4f}, "
          f"phi_source {first.phi_source:+.4f} -> {last.phi_source:+.4f}")
    print(f"distinct patches touched: {len(set(result.visited))}, PSNR {psnr(x, result.perturbed):.2f} dB\n")

    show("proposed", result.perturbed, gallery)
    for name, y in (("baseline1 inject", baseline1_inject(x, gallery["B"])),
                    ("baseline2 substitute", baseline2_substitute(x, gallery["A"], gallery["B"])),
                    ("denoised inject", baseline_denoised_inject(x, gallery["B"]))):
        pred = show(name, y, gallery)
        print(f"{'':<22}    PSNR {psnr(x, y):.2f} dB{'' if pred == 'B' else '  (not spoofed)'}")


if __name__ == "__main__":
    main()
