"""Desk-scale close-talking sweep: P_C of every method over N and T_int."""

import argparse
from pathlib import Path

from rmselect.harness import run_sweep
from rmselect.scene.scenario import FULL_SCALE_SWEEP, load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=ROOT / "scenarios" / "desk.yaml")
    ap.add_argument("--out-dir", default="runs/desk")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--paper-scale", action="store_true")
    args = ap.parse_args()
    sc = load_scenario(args.scenario)
    if args.paper_scale:
        sc = sc.with_sweep(**FULL_SCALE_SWEEP)
    res = run_sweep(sc, workers=args.workers, progress=lambda i, n: print(f"{i}/{n}", flush=True))
    res.write(args.out_dir)
    for s in res.summary:
        print(f"{s['method']:>9s} N={s['N']} T={s['T_int']:g}s P_C={s['P_C_mean']:.3f} +- {s['P_C_std']:.3f}")


if __name__ == "__main__":
    main()
