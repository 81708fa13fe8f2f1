"""Input SNR at the HA reference mic and at the target's RM as N grows."""

import argparse
import csv
from pathlib import Path

import numpy as np

from rmselect.harness import combo_seed, snr_report
from rmselect.scene.render import render
from rmselect.scene.scenario import build_scene, load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=ROOT / "scenarios" / "desk.yaml")
    ap.add_argument("--n", default="2,4,6,8")
    ap.add_argument("--combos", type=int, default=5)
    ap.add_argument("--out", default="runs/snr_vs_n.csv")
    args = ap.parse_args()
    sc = load_scenario(args.scenario)
    rows = []
    for n in (int(v) for v in args.n.split(",")):
        ha, rm = [], []
        for c in range(args.combos):
            rs = render(sc, build_scene(sc, n, combo_seed(sc.sweep.seed, n, c)))
            rep = snr_report(rs)
            ha.append(rep[0]["snr_db"])
            rm.append(rep[rs.num_ha + rs.truth_channel]["snr_db"])
        rows.append([n, np.mean(ha), np.std(ha, ddof=1), np.mean(rm), np.std(rm, ddof=1)])
        print(f"N={n}: HA ref {np.mean(ha):6.2f} dB, target RM {np.mean(rm):6.2f} dB")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "ha_ref_snr_mean", "ha_ref_snr_std", "target_rm_snr_mean", "target_rm_snr_std"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
