"""Table-array beam bank: P_S per beam and output SNR of each beam vs the HA beamformer."""

import argparse
import csv
from pathlib import Path

import numpy as np

from rmselect.beamforming import run_mpdr
from rmselect.dsp import StftConfig, stft_analyze
from rmselect.harness import combo_seed, run_sweep, snr_report
from rmselect.scene.noise import snr_db
from rmselect.scene.render import render_beam_bank
from rmselect.scene.scenario import build_scene, load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=ROOT / "scenarios" / "table.yaml")
    ap.add_argument("--n", default="3")
    ap.add_argument("--out-dir", default="runs/beam_bank")
    args = ap.parse_args()
    ns = tuple(int(v) for v in args.n.split(","))
    sc = load_scenario(args.scenario).with_sweep(n_competing=ns)
    res = run_sweep(sc, progress=lambda i, n: print(f"{i}/{n}", flush=True))
    res.write(args.out_dir)
    for s in res.summary:
        print(f"N={s['N']} T={s['T_int']:g}s P_S per beam: {np.round(s['P_S_mean'], 3).tolist()}")
    cfg = StftConfig()
    rows = []
    for n in ns:
        for c in range(sc.sweep.combos):
            rs = render_beam_bank(sc, build_scene(sc, n, combo_seed(sc.sweep.seed, n, c)))
            w = run_mpdr(stft_analyze(rs.ha_signals, cfg), rs.steering.d).weights
            rep = snr_report(rs, {"ha_mpdr": w}, cfg)
            M = rs.num_ha
            target, rest = rs.clean_stems[0], rs.noise_stems + rs.clean_stems[1:].sum(axis=0)
            for r in range(rs.num_remote):
                rows.append([n, c, f"B{r + 1}", snr_db(target[M + r], rest[M + r])])
            rows.append([n, c, "HA", rep[-1]["snr_db"]])
    with open(Path(args.out_dir) / "beam_snr.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "combo", "output", "snr_db"])
        w.writerows(rows)
    for name in [f"B{r + 1}" for r in range(len(sc.beam_bank.beams))] + ["HA"]:
        print(f"{name}: mean output SNR {np.mean([r[3] for r in rows if r[2] == name]):.2f} dB")


if __name__ == "__main__":
    main()
