"""Target away from the look direction: the HA steers to a rotated azimuth.

The competing talkers are kept off the steered position so that the beam
never points straight at a competitor.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from rmselect.harness import run_sweep
from rmselect.scene.scenario import GeometrySection, SteeringSection, load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=ROOT / "scenarios" / "desk.yaml")
    ap.add_argument("--angles", default="0,22.5,45,90")
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--t-int", type=float, default=2.0)
    ap.add_argument("--combos", type=int, default=5)
    ap.add_argument("--out", default="runs/nonfrontal.csv")
    args = ap.parse_args()
    base = load_scenario(args.scenario).with_sweep(
        n_competing=(args.n,), t_int=(args.t_int,), combos=args.combos, methods=("proposed",))
    rows = []
    for a in (float(v) for v in args.angles.split(",")):
        geo = GeometrySection(**{**base.geometry.__dict__, "exclude_azimuths": (a,) if a else ()})
        sc = base.replace(geometry=geo, steering=SteeringSection(mode="rotate", rotate_deg=a))
        pcs = run_sweep(sc).pcs("proposed", args.n, args.t_int)
        rows.append([a, float(np.mean(pcs)), float(np.std(pcs, ddof=1))])
        print(f"offset={a:g} deg P_C={np.mean(pcs):.3f}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset_deg", "P_C_mean", "P_C_std"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
