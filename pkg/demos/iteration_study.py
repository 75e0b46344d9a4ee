"""Spoof success as a function of the iteration budget.

    python3 demos/iteration_study.py [--strength 0.003] [--images 10]

Runs the attack once per image with the largest budget and reads the smaller
budgets off snapshots, so each column equals an independent run with that cap.
At the acceptance-suite strength of 0.01 the attack rarely succeeds at any
budget; a borderline strength such as 0.003 shows how extra iterations help.
"""
import argparse

from prnuspoof.harness import ExperimentConfig, default_sensors, run_iteration_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--strength", type=float, default=0.003)
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--budgets", type=int, nargs="+", default=[1000, 2000, 3000, 6000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=None)
    a = ap.parse_args()

    cfg = ExperimentConfig(sensors=default_sensors(5, a.strength), spoof_count=a.images,
                           pairs=(("s0", "s1"),), seed=a.seed)
    reports = run_iteration_study(cfg, "s0", "s1", sorted(a.budgets), jobs=a.jobs)
    print(f"strength {a.strength}, pair s0->s1, {a.images} images")
    print(f"{'max iters':>10} {'SSR %':>7} {'reached margin':>15} {'median PSNR':>12}")
    for r in reports:
        hit = sum(i["succeeded"] for i in r.images)
        print(f"{r.max_iters:>10} {r.ssr:>7.1f} {hit:>15} {r.median_psnr:>12.2f}")


if __name__ == "__main__":
    main()
