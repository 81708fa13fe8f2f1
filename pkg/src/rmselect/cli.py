"""Command line: ``rmselect {rir,render,select,experiment,validate}``.

Exit codes: 0 success, 1 usage, 2 data or schema problem, 3 numerical failure.
Sweep settings resolve as flag, then environment variable, then scenario file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .array_model import SteeringVector
from .beamforming import NumericalDegeneracyError, run_mpdr
from .covariance import SingularMatrixError, warmup_frames
from .dsp import StftConfig, WavError, read_wav, stft_analyze, write_wav
from .scene.rir import InvalidGeometryError, RoomSpec, direct_path_delay, estimate_t60, image_rir
from .scene.scenario import FULL_SCALE_SWEEP, ScenarioError, build_scene, load_scenario
from .scene.stimuli import CorpusError

log = logging.getLogger("rmselect")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

ENV = {
    "seed": "RMSELECT_SEED",
    "t_int": "RMSELECT_T_INT",
    "methods": "RMSELECT_METHODS",
    "workers": "RMSELECT_WORKERS",
    "paper_scale": "RMSELECT_PAPER_SCALE",
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _setting(args, name, parse):
    """Flag value, else the environment override, else None (scenario file wins)."""
    value = getattr(args, name, None)
    if value is not None and value is not False:
        return parse(value) if isinstance(value, str) else value
    env = os.environ.get(ENV[name])
    if env not in (None, ""):
        return parse(env)
    return None


def _truthy(text) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).strip().lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).strip().lower() in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _int(text) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"expected an integer, got {text!r}") from None


def _methods(text) -> tuple:
    return tuple(m.strip() for m in str(text).split(",") if m.strip())


def apply_overrides(sc, args):
    """Scenario with sweep fields replaced by flags or environment overrides."""
    changes = {}
    if _setting(args, "paper_scale", _truthy):
        changes.update(FULL_SCALE_SWEEP)
    seed = _setting(args, "seed", _int)
    if seed is not None:
        changes["seed"] = seed
    t_int = _setting(args, "t_int", _floats)
    if t_int is not None:
        changes["t_int"] = t_int
    methods = _setting(args, "methods", _methods)
    if methods is not None:
        changes["methods"] = methods
    if getattr(args, "n", None):
        changes["n_competing"] = _ints(args.n)
    if getattr(args, "combos", None):
        changes["combos"] = args.combos
    if not changes:
        return sc
    from .scene.scenario import parse_scenario
    import yaml

    d = sc.to_dict()
    d["sweep"].update({k: list(v) if isinstance(v, tuple) else v for k, v in changes.items()})
    # re-validate so overrides get the same range checks as the file
    return parse_scenario(yaml.safe_dump(_plain(d)), "<overrides>", sc.base_dir)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def cmd_rir(args) -> int:
    room = RoomSpec(tuple(args.dims), args.t60, max_image_order=args.max_order)
    h = image_rir(room, args.src, args.mic, args.fs)
    write_wav(args.out, h, args.fs, fmt="float32")
    delay = direct_path_delay(args.src, args.mic, args.fs, room.speed_of_sound)
    print(f"direct-path delay: {delay / args.fs:.6f} s ({delay:.2f} samples)")
    if room.anechoic:
        print("estimated T60: 0 s (anechoic)")
    else:
        print(f"estimated T60: {estimate_t60(h, args.fs):.3f} s (Sabine target {args.t60:g} s)")
    return EXIT_OK


def cmd_render(args) -> int:
    from .harness import combo_seed
    from .scene.render import export_scene, render_scene

    sc = apply_overrides(load_scenario(args.scenario), args)
    n = args.n_competing if args.n_competing is not None else sc.sweep.n_competing[0]
    seed = combo_seed(sc.sweep.seed, n, args.combo)
    rs = render_scene(sc, build_scene(sc, n, seed))
    sidecar = export_scene(rs, args.out_dir)
    print(f"rendered N={n} combo={args.combo} (seed {seed}) to {args.out_dir}; "
          f"target on remote channel {sidecar['truth_channel'] + 1} of {sidecar['num_remote']}")
    return EXIT_OK


def _read_multi(paths, cfg) -> np.ndarray:
    chans = []
    for p in paths:
        x, _ = read_wav(p, cfg)
        chans.append(x)
    n = min(c.shape[1] for c in chans)
    return np.concatenate([c[:, :n] for c in chans])


def cmd_select(args) -> int:
    from .harness import compute_pc
    from .selector import SelectorConfig, run_selector, write_decision_log

    cfg = StftConfig(sample_rate=args.fs)
    if not Path(args.steering).exists():
        raise DataError(f"steering file {args.steering} not found")
    d = SteeringVector.load(args.steering)
    ha = _read_multi([args.ha], cfg)
    rem = _read_multi(args.remote, cfg)
    n = min(ha.shape[1], rem.shape[1])
    ha, rem = ha[:, :n], rem[:, :n]
    if d.num_mics != ha.shape[0] or d.num_bins != cfg.num_bins:
        raise DataError(f"steering vector is {d.num_mics}x{d.num_bins}, HA input has "
                        f"{ha.shape[0]} channels and {cfg.num_bins} bins")
    bf = run_mpdr(stft_analyze(ha, cfg), d.d)
    rblk = stft_analyze(rem, cfg)
    t_int = _setting(args, "t_int", _floats) or (2.0,)
    scfg = SelectorConfig(t_int[0], cfg)
    tr = run_selector(bf.y_bf, rblk.data, scfg, warmup=warmup_frames())
    if not tr.valid.any():
        raise DataError("input is too short for the integration time and warm-up")
    write_decision_log(args.out, tr, cfg.hop, cfg.sample_rate, [i + 1 for i in range(rem.shape[0])])
    dec = tr.valid_decisions
    modal = int(np.bincount(dec, minlength=rem.shape[0]).argmax())
    line = f"modal channel: {modal + 1} ({np.mean(dec == modal):.3f} of {dec.size} frames)"
    if args.truth:
        truth = json.loads(Path(args.truth).read_text())["truth_channel"]
        line += f"; P_C = {compute_pc(dec, truth):.4f}"
    print(line)
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .harness import run_sweep

    sc = apply_overrides(load_scenario(args.scenario), args)
    workers = _setting(args, "workers", _int) or 1
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    total = len(sc.sweep.n_competing) * sc.sweep.combos

    def progress(i, n):
        log.info("combination %d/%d done", i, n)

    log.info("running %d renders with %d worker(s)", total, workers)
    res = run_sweep(sc, workers=workers, log_dir=args.log_dir, progress=progress)
    paths = res.write(args.out_dir)
    for s in res.summary:
        print(f"{s['method']:>9s} N={s['N']} T_int={s['T_int']:g}s "
              f"P_C={s['P_C_mean']:.4f} +- {s['P_C_std']:.4f}")
    print(f"wrote {paths['results']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{args.scenario}: valid (schema_version {sc.schema_version}, mode {sc.mode})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rmselect", description="Head-steered remote-channel selection tools.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("rir", help="write one image-method room impulse response")
    r.add_argument("--dims", type=float, nargs=3, default=[7.0, 6.0, 3.0], metavar=("X", "Y", "Z"))
    r.add_argument("--t60", type=float, default=0.3, help="Sabine target; 0 for anechoic")
    r.add_argument("--max-order", type=int, default=-1)
    r.add_argument("--src", type=float, nargs=3, required=True)
    r.add_argument("--mic", type=float, nargs=3, required=True)
    r.add_argument("--fs", type=int, default=16000)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rir)

    def sweep_flags(q):
        q.add_argument("--seed", type=int, default=None, help=f"master seed (env {ENV['seed']})")
        q.add_argument("--t-int", dest="t_int", default=None,
                       help=f"comma-separated integration times in s (env {ENV['t_int']})")
        q.add_argument("--methods", default=None,
                       help=f"subset of proposed,optimal,ncc,mog,random (env {ENV['methods']})")
        q.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None,
                       help=f"N=2..8, five integration times, 40 combinations (env {ENV['paper_scale']})")
        q.add_argument("--n", default=None, help="comma-separated competing-talker counts")
        q.add_argument("--combos", type=int, default=None)

    e = sub.add_parser("render", help="render one scene to WAV files and a truth sidecar")
    e.add_argument("scenario")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--n-competing", type=int, default=None)
    e.add_argument("--combo", type=int, default=0)
    sweep_flags(e)
    e.set_defaults(func=cmd_render)

    s = sub.add_parser("select", help="run the selector on WAV files")
    s.add_argument("--ha", required=True, help="multichannel hearing-aid WAV")
    s.add_argument("--remote", nargs="+", required=True, help="remote-channel WAVs")
    s.add_argument("--steering", required=True, help="steering vector .npz")
    s.add_argument("--t-int", dest="t_int", default=None)
    s.add_argument("--fs", type=int, default=16000)
    s.add_argument("--truth", default=None, help="truth.json sidecar from 'render'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    x = sub.add_parser("experiment", help="run a sweep and write result tables")
    x.add_argument("scenario")
    x.add_argument("--out-dir", required=True)
    x.add_argument("--workers", default=None, help=f"worker processes (env {ENV['workers']})")
    x.add_argument("--log-dir", default=None, help="also write per-frame decision logs here")
    sweep_flags(x)
    x.set_defaults(func=cmd_experiment)

    v = sub.add_parser("validate", help="check a scenario file against the schema")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rmselect: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        for problem in exc.problems:
            print(problem, file=sys.stderr)
        return EXIT_DATA
    except (NumericalDegeneracyError, SingularMatrixError, FloatingPointError) as exc:
        print(f"rmselect: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, WavError, CorpusError, InvalidGeometryError, FileNotFoundError, ValueError) as exc:
        print(f"rmselect: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"rmselect: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
