"""Experiment orchestration: seeded (N, T_int, combination) sweeps and metrics.

Every method in a run reads the same rendered audio, and all of them are
scored on the same frames: those whose selection window lies entirely after
the covariance warm-up.
"""

from __future__ import annotations

import csv
import json
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import VadSequence, mog_scores, ncc_scores, oracle_vad, random_trace
from .beamforming import beamform, run_mpdr
from .covariance import warmup_frames
from .dsp import StftConfig, stft_analyze
from .scene.noise import snr_db
from .scene.render import RenderedScene, render_scene
from .scene.scenario import Scenario, build_scene
from .selector import SelectorConfig, run_selector, write_decision_log

__all__ = [
    "EmptyDecisionsError",
    "ExperimentResult",
    "compute_pc",
    "compute_psr",
    "combo_seed",
    "evaluate_scene",
    "run_combo",
    "run_sweep",
    "summarize",
    "snr_report",
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
]

SNR_CAP_DB = 120.0
RESULT_COLUMNS = ["method", "N", "T_int", "combo", "combo_seed", "R", "truth_channel", "P_C", "P_S",
                  "frames_counted", "excluded_warmup_frames", "rho2_min", "rho2_max"]
SUMMARY_COLUMNS = ["method", "N", "T_int", "combos", "P_C_mean", "P_C_std", "P_S_mean",
                   "frames_counted"]


class EmptyDecisionsError(ValueError):
    pass


def compute_pc(decisions, truth: int) -> float:
    """Fraction of decision frames that pick the true channel."""
    d = np.asarray(decisions)
    if d.size == 0:
        raise EmptyDecisionsError("no decision frames to score")
    return float(np.mean(d == truth))


def compute_psr(decisions, R: int) -> np.ndarray:
    """Fraction of decision frames that pick each of the ``R`` channels."""
    d = np.asarray(decisions)
    if d.size == 0:
        raise EmptyDecisionsError("no decision frames to score")
    if R < 1 or d.min() < 0 or d.max() >= R:
        raise ValueError("decisions must be channel indices in 0..R-1")
    return np.bincount(d, minlength=R) / d.size


def combo_seed(master_seed: int, n_competing: int, combo: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(n_competing), int(combo)]).generate_state(1)[0])


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _vads(rs: RenderedScene, cfg: StftConfig, threshold_db: float):
    v0 = oracle_vad(rs.own_voice, cfg, threshold_db)
    talker = [oracle_vad(x, cfg, threshold_db) for x in rs.talker_signals]
    zeros = VadSequence(np.zeros(len(v0), dtype=int), cfg.hop)
    cands = [talker[t] if t >= 0 else zeros for t in rs.channel_talker]
    return v0, cands


def evaluate_scene(rs: RenderedScene, sc: Scenario, t_ints, methods, cfg: StftConfig | None = None,
                   rng_seed=0, log_dir=None) -> list[dict]:
    """Score every method at every integration time on one rendered scene."""
    cfg = cfg or StftConfig(sample_rate=rs.sample_rate)
    ha = stft_analyze(rs.ha_signals, cfg)
    rem = stft_analyze(rs.remote_channels, cfg)
    M = rs.num_ha
    need_oracle = "optimal" in methods
    noise_blk = None
    if need_oracle:
        # everything at the HA mics except the target talker
        interference = rs.noise_stems[:M] + rs.clean_stems[1:, :M].sum(axis=0)
        noise_blk = stft_analyze(interference, cfg)
    bf = run_mpdr(ha, rs.steering.d, noise=noise_blk)
    warm = warmup_frames()
    L = ha.num_frames
    R = rs.num_remote
    truth = rs.truth_channel
    v0 = cands = None
    if "ncc" in methods or "mog" in methods:
        v0, cands = _vads(rs, cfg, sc.stimuli.vad_threshold_db)
    rows = []
    for t in t_ints:
        scfg = SelectorConfig(float(t), cfg)
        D = scfg.window_frames
        first = warm + D - 1
        if first >= L:
            raise ValueError(f"T_int={t} s leaves no decision frames in a {L}-frame signal")
        valid = np.arange(L) >= first
        for method in methods:
            rho = (np.nan, np.nan)
            if method in ("proposed", "optimal"):
                mode = "approximation" if method == "proposed" else "oracle"
                tr = run_selector(bf.y_bf, rem.data, SelectorConfig(float(t), cfg, weighting_mode=mode),
                                  warmup=warm, noise_bf=bf.noise_bf)
                dec = tr.decisions[valid]
                rho = (float(np.min(tr.rho2_min[valid])), float(np.max(tr.rho2_max[valid])))
                if log_dir is not None:
                    write_decision_log(Path(log_dir) / f"decisions_{method}_T{t:g}.csv", tr, cfg.hop,
                                       cfg.sample_rate)
            elif method == "ncc":
                lag = int(round(sc.sweep.ncc_lag_s * cfg.sample_rate / cfg.hop))
                dec = np.argmax(ncc_scores(v0, cands, D, lag), axis=1)[valid]
            elif method == "mog":
                dec = np.argmax(mog_scores(v0, cands, D), axis=1)[valid]
            elif method == "random":
                seed = np.random.SeedSequence([int(rng_seed), int(round(t * 1000)), 99])
                dec = random_trace(R, L, np.random.default_rng(seed))[valid]
            else:
                raise ValueError(f"unknown method {method!r}")
            psr = compute_psr(dec, R)
            rows.append({
                "method": method, "T_int": float(t), "R": R, "truth_channel": truth,
                "P_C": compute_pc(dec, truth), "P_S": psr,
                "frames_counted": int(dec.size), "excluded_warmup_frames": int(first),
                "rho2_min": rho[0], "rho2_max": rho[1],
            })
    return rows


def run_combo(sc: Scenario, n_competing: int, combo: int, log_dir=None) -> list[dict]:
    seed = combo_seed(sc.sweep.seed, n_competing, combo)
    scene = build_scene(sc, n_competing, seed)
    rs = render_scene(sc, scene)
    rows = evaluate_scene(rs, sc, sc.sweep.t_int, sc.sweep.methods, rng_seed=seed, log_dir=log_dir)
    for r in rows:
        r.update({"N": n_competing, "combo": combo, "combo_seed": seed})
    return rows


def _run_task(args):
    sc, n, c, log_dir = args
    sub = None
    if log_dir is not None:
        sub = Path(log_dir) / f"N{n}_combo{c}"
        sub.mkdir(parents=True, exist_ok=True)
    return run_combo(sc, n, c, sub)


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def pc(self, method: str, n: int, t: float) -> float:
        for s in self.summary:
            if s["method"] == method and s["N"] == n and s["T_int"] == float(t):
                return s["P_C_mean"]
        raise KeyError((method, n, t))

    def pcs(self, method: str, n: int, t: float) -> list[float]:
        return [r["P_C"] for r in self.rows if r["method"] == method and r["N"] == n
                and r["T_int"] == float(t)]

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) if c != "P_S" else ";".join(_fmt(v) for v in r[c])
                            for c in RESULT_COLUMNS])
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for s in self.summary:
                w.writerow([_fmt(s[c]) if c != "P_S_mean" else ";".join(_fmt(v) for v in s[c])
                            for c in SUMMARY_COLUMNS])
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        return {"results": out / "results.csv", "summary": out / "summary.csv",
                "manifest": out / "manifest.json"}


def summarize(rows) -> list[dict]:
    """Mean and sample standard deviation (ddof=1; 0 for one combo) across combos."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["method"], r["N"], r["T_int"]), []).append(r)
    out = []
    for (method, n, t), rs in groups.items():
        pc = np.array([r["P_C"] for r in rs])
        ps = np.array([r["P_S"] for r in rs])
        out.append({
            "method": method, "N": n, "T_int": t, "combos": len(rs),
            "P_C_mean": float(np.mean(pc)),
            "P_C_std": float(np.std(pc, ddof=1)) if len(rs) > 1 else 0.0,
            "P_S_mean": ps.mean(axis=0),
            "frames_counted": int(sum(r["frames_counted"] for r in rs)),
        })
    return out


def _code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_sweep(sc: Scenario, workers: int = 1, log_dir=None, progress=None) -> ExperimentResult:
    """Render every (N, combination) once and evaluate all methods and integration times.

    Output order is fixed by (N, combination, T_int, method) whatever the
    worker count, so reruns with the same master seed give identical tables.
    """
    tasks = [(sc, n, c, log_dir) for n in sc.sweep.n_competing for c in range(sc.sweep.combos)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = []
        for i, t in enumerate(tasks):
            chunks.append(_run_task(t))
            if progress is not None:
                progress(i + 1, len(tasks))
    rows = [r for chunk in chunks for r in chunk]
    manifest = {
        "scenario_sha256": sc.digest(),
        "master_seed": sc.sweep.seed,
        "code_version": _code_version(),
        "scenario": sc.to_dict(),
        "combo_seeds": {f"N{n}_combo{c}": combo_seed(sc.sweep.seed, n, c)
                        for n in sc.sweep.n_competing for c in range(sc.sweep.combos)},
    }
    return ExperimentResult(rows, summarize(rows), manifest)


def snr_report(rs: RenderedScene, weights: dict | None = None, cfg: StftConfig | None = None) -> list[dict]:
    """Input SNR at every sensor and output SNR of any given beamformer weights.

    The target is talker 0; everything else (competing talkers and noise) is
    counted as noise. ``weights`` maps a name to ``(L, K, M)`` HA weights.
    Values are capped at +-120 dB.
    """
    if rs.clean_stems is None or rs.noise_stems is None:
        raise ValueError("SNR report needs isolated stems")
    cfg = cfg or StftConfig(sample_rate=rs.sample_rate)
    M = rs.num_ha
    target = rs.clean_stems[0]
    rest = rs.noise_stems + rs.clean_stems[1:].sum(axis=0)
    rows = []
    for s in range(target.shape[0]):
        kind = "ha_mic" if s < M else "remote"
        idx = s if s < M else s - M
        rows.append({"sensor": f"{kind}_{idx}", "kind": kind, "snr_db": snr_db(target[s], rest[s], SNR_CAP_DB)})
    for name, w in (weights or {}).items():
        warm = warmup_frames()
        ts = beamform(w, stft_analyze(target[:M], cfg).data)[warm:]
        ns = beamform(w, stft_analyze(rest[:M], cfg).data)[warm:]
        rows.append({"sensor": name, "kind": "beamformer", "snr_db": snr_db(ts, ns, SNR_CAP_DB)})
    return rows


def write_snr_report(path, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor", "kind", "snr_db"])
        for r in rows:
            w.writerow([r["sensor"], r["kind"], repr(float(r["snr_db"]))])
    return path
