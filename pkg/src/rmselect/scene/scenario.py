"""Declarative scenario files and concrete scene construction.

A scenario is a YAML mapping with a ``schema_version`` and the sections
``room``, ``geometry``, ``noise``, ``stimuli``, ``steering``, ``beam_bank`` and
``sweep``. Every section is optional; missing fields take the defaults below.
Validation reports each problem with its line number and dotted field path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .rir import RoomSpec

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioError",
    "RoomSection",
    "GeometrySection",
    "NoiseSection",
    "StimuliSection",
    "SteeringSection",
    "BeamBankSection",
    "SweepSection",
    "Scenario",
    "ConcreteScene",
    "load_scenario",
    "parse_scenario",
    "validate_scenario_text",
    "build_scene",
    "FULL_SCALE_SWEEP",
]

SCHEMA_VERSION = 1
MODES = ("close_talking_rms", "table_beam_bank")
METHODS = ("proposed", "optimal", "ncc", "mog", "random")


class ScenarioError(ValueError):
    """Schema or range violations; ``problems`` holds one message per issue."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass(frozen=True)
class RoomSection:
    dims: tuple = (7.0, 6.0, 3.0)
    t60: float = 0.3
    absorption: tuple | None = None
    max_image_order: int = -1
    speed_of_sound: float = 343.0
    rir_length: float | None = None

    def spec(self) -> RoomSpec:
        return RoomSpec(self.dims, self.t60, self.absorption, self.max_image_order,
                        self.speed_of_sound, self.rir_length)


@dataclass(frozen=True)
class GeometrySection:
    ha_position: tuple = (3.5, 3.0, 1.2)
    ha_lateral: float = 0.09
    ha_spacing: float = 0.01
    num_positions: int = 16
    talker_radius: float = 1.9
    talker_height: float = 1.2
    rm_offset: float = 0.2
    # azimuths never offered to competing talkers
    exclude_azimuths: tuple = ()


@dataclass(frozen=True)
class NoiseSection:
    ssn_snr_db: float = 15.0
    rm_noise_mode: str = "independent"


@dataclass(frozen=True)
class StimuliSection:
    corpus: str = "synthetic"  # or a directory with manifest.csv
    num_talkers: int = 24
    corpus_seed: int = 0
    mean_turn: float = 2.0
    gap: float = 0.2
    overlap_prob: float = 0.05
    vad_threshold_db: float = -40.0


@dataclass(frozen=True)
class SteeringSection:
    # matched: true frontal RATF; jitter: random per-bin errors; rotate: RATF of
    # another circle position; ir_set: frontal RATF from an imported IR directory
    mode: str = "matched"
    jitter: float = 0.0
    rotate_deg: float = 0.0
    ir_set: str | None = None


@dataclass(frozen=True)
class BeamBankSection:
    table_center: tuple = (5.0, 4.0, 0.8)
    table_mics: int = 8
    table_radius: float = 0.08
    num_loudspeakers: int = 10
    loudspeaker_radius: float = 1.5
    loudspeaker_height: float = 1.2
    target: int = 4
    beams: tuple = (4, 3, 2, 9, 5)


@dataclass(frozen=True)
class SweepSection:
    n_competing: tuple = (2, 4, 6)
    t_int: tuple = (0.5, 2.0, 15.0)
    combos: int = 5
    seed: int = 0
    methods: tuple = ("proposed", "optimal", "ncc", "mog", "random")
    ncc_lag_s: float = 2.0


FULL_SCALE_SWEEP = {
    "n_competing": (2, 3, 4, 5, 6, 7, 8),
    "t_int": (0.5, 1.0, 2.0, 5.0, 15.0),
    "combos": 40,
}


@dataclass(frozen=True)
class Scenario:
    schema_version: int = SCHEMA_VERSION
    mode: str = "close_talking_rms"
    duration: float = 30.0
    sample_rate: int = 16000
    room: RoomSection = field(default_factory=RoomSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    stimuli: StimuliSection = field(default_factory=StimuliSection)
    steering: SteeringSection = field(default_factory=SteeringSection)
    beam_bank: BeamBankSection = field(default_factory=BeamBankSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    base_dir: str = "."

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_sweep(self, **changes) -> "Scenario":
        return dataclasses.replace(self, sweep=dataclasses.replace(self.sweep, **changes))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def max_competing(self) -> int:
        if self.mode == "table_beam_bank":
            return self.beam_bank.num_loudspeakers - 1
        return self.geometry.num_positions - 1 - len(self.geometry.exclude_azimuths)


SECTIONS = {
    "room": RoomSection,
    "geometry": GeometrySection,
    "noise": NoiseSection,
    "stimuli": StimuliSection,
    "steering": SteeringSection,
    "beam_bank": BeamBankSection,
    "sweep": SweepSection,
}
TOP_LEVEL = {"schema_version": int, "mode": str, "duration": float, "sample_rate": int}


def _line_map(node, path=(), out=None) -> dict:
    """Dotted path -> 1-based line of every key/value in a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[".".join(p)] = k.start_mark.line + 1
            _line_map(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[".".join(p)] = v.start_mark.line + 1
            _line_map(v, p, out)
    return out


def _expected_kind(default):
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return tuple
    return None


def _coerce(value, default, where, problems):
    kind = _expected_kind(default)
    if value is None:
        return None
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return default
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer, got {value!r}")
            return default
        return int(value)
    if kind is tuple:
        if not isinstance(value, (list, tuple)):
            problems.append(f"{where}: expected a list, got {value!r}")
            return default
        return tuple(value)
    if isinstance(default, str) and not isinstance(value, str):
        problems.append(f"{where}: expected text, got {value!r}")
        return default
    return value


def _section(cls, data, name, lines, src, problems):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        problems.append(f"{src}:{lines.get(name, '?')}: {name}: expected a mapping")
        return cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        where = f"{src}:{lines.get(path, '?')}: {path}"
        if key not in known:
            problems.append(f"{where}: unknown field (allowed: {', '.join(sorted(known))})")
            continue
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kwargs[key] = _coerce(value, default, where, problems)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{src}:{lines.get(name, '?')}: {name}: {exc}")
        return cls()


def _check_ranges(sc: Scenario, lines, src, problems):
    def at(path):
        return f"{src}:{lines.get(path, '?')}: {path}"

    if sc.schema_version != SCHEMA_VERSION:
        problems.append(f"{at('schema_version')}: unsupported version {sc.schema_version} "
                        f"(expected {SCHEMA_VERSION})")
    if sc.mode not in MODES:
        problems.append(f"{at('mode')}: must be one of {', '.join(MODES)}")
    if sc.duration <= 0:
        problems.append(f"{at('duration')}: must be positive")
    if sc.sample_rate <= 0:
        problems.append(f"{at('sample_rate')}: must be positive")
    limit = sc.max_competing
    for i, n in enumerate(sc.sweep.n_competing):
        if not isinstance(n, int) or isinstance(n, bool) or n < 1 or n > limit:
            problems.append(
                f"{at(f'sweep.n_competing.{i}')}: value {n!r} out of range; N must lie in "
                f"1..{limit} because the {limit + 1}-position layout keeps one position for the target"
            )
    for i, t in enumerate(sc.sweep.t_int):
        if isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 or t > sc.duration:
            problems.append(f"{at(f'sweep.t_int.{i}')}: integration time {t!r} must lie in "
                            f"(0, duration]")
    if sc.sweep.combos < 1:
        problems.append(f"{at('sweep.combos')}: need at least one combination")
    bad = [m for m in sc.sweep.methods if m not in METHODS]
    if bad:
        problems.append(f"{at('sweep.methods')}: unknown methods {bad} (allowed: {', '.join(METHODS)})")
    if sc.noise.rm_noise_mode not in ("independent", "none"):
        problems.append(f"{at('noise.rm_noise_mode')}: must be 'independent' or 'none'")
    if sc.steering.mode not in ("matched", "jitter", "rotate", "ir_set"):
        problems.append(f"{at('steering.mode')}: must be matched, jitter, rotate or ir_set")
    if sc.steering.mode == "ir_set" and not sc.steering.ir_set:
        problems.append(f"{at('steering.mode')}: ir_set mode needs steering.ir_set")
    if sc.geometry.num_positions < 2:
        problems.append(f"{at('geometry.num_positions')}: need at least two positions")
    bb = sc.beam_bank
    for i, b in enumerate(bb.beams):
        if not 1 <= b <= bb.num_loudspeakers:
            problems.append(f"{at(f'beam_bank.beams.{i}')}: no loudspeaker {b}")
    if not 1 <= bb.target <= bb.num_loudspeakers:
        problems.append(f"{at('beam_bank.target')}: no loudspeaker {bb.target}")
    elif sc.mode == "table_beam_bank" and bb.target not in bb.beams:
        problems.append(f"{at('beam_bank.beams')}: no beam is aimed at the target loudspeaker")


def parse_scenario(text: str, source: str = "<scenario>", base_dir=".") -> Scenario:
    """Parse and validate scenario text; raises ScenarioError listing every problem."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{source}: not valid YAML: {exc}"]) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError([f"{source}:1: top level must be a mapping"])
    lines = _line_map(node)
    problems: list[str] = []
    if "schema_version" not in data:
        problems.append(f"{source}:1: schema_version: required field is missing")
    top = {}
    for key, value in data.items():
        if key in SECTIONS:
            continue
        if key not in TOP_LEVEL:
            allowed = sorted(list(TOP_LEVEL) + list(SECTIONS))
            problems.append(f"{source}:{lines.get(key, '?')}: {key}: unknown field "
                            f"(allowed: {', '.join(allowed)})")
            continue
        default = getattr(Scenario, key) if key != "mode" else "close_talking_rms"
        top[key] = _coerce(value, default, f"{source}:{lines.get(key, '?')}: {key}", problems)
    sections = {
        name: _section(cls, data.get(name), name, lines, source, problems)
        for name, cls in SECTIONS.items()
    }
    sc = Scenario(**top, **sections, base_dir=str(base_dir))
    _check_ranges(sc, lines, source, problems)
    if problems:
        raise ScenarioError(problems)
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"{path}: cannot read scenario file: {exc.strerror}"]) from None
    return parse_scenario(text, str(path), path.parent)


def validate_scenario_text(text: str, source: str = "<scenario>") -> list[str]:
    """List of problems; empty when the scenario is valid."""
    try:
        parse_scenario(text, source)
    except ScenarioError as exc:
        return exc.problems
    return []


@dataclass(frozen=True)
class ConcreteScene:
    """One seeded draw: which positions are occupied and in what channel order."""

    combo_seed: int
    n_competing: int
    target_position: int
    competing_positions: tuple
    # remote channel r carries the talker at position channel_positions[r]
    channel_positions: tuple
    truth_channel: int
    conversation_seed: int
    noise_seed: int

    @property
    def talker_positions(self) -> tuple:
        return (self.target_position,) + self.competing_positions


def _position_azimuths(sc: Scenario) -> np.ndarray:
    return np.arange(sc.geometry.num_positions) * 360.0 / sc.geometry.num_positions


def build_scene(sc: Scenario, n_competing: int, combo_seed) -> ConcreteScene:
    """Target at the frontal position, N competitors drawn without replacement.

    Close-talking mode draws from the circle positions (position 0 is 0 deg).
    Beam-bank mode draws from the loudspeakers other than the target, and the
    channels are the fixed beams.
    """
    if n_competing < 1 or n_competing > sc.max_competing:
        raise ScenarioError([f"n_competing={n_competing} out of range 1..{sc.max_competing}"])
    ss = np.random.SeedSequence(combo_seed)
    rng = np.random.default_rng(ss)
    conv_seed, noise_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    if sc.mode == "table_beam_bank":
        bb = sc.beam_bank
        target = bb.target
        pool = [p for p in range(1, bb.num_loudspeakers + 1) if p != target]
        comp = tuple(int(p) for p in rng.choice(pool, size=n_competing, replace=False))
        channels = tuple(bb.beams)
        truth = channels.index(target)
        return ConcreteScene(int(combo_seed), n_competing, target, comp, channels, truth,
                             conv_seed, noise_seed)
    az = _position_azimuths(sc)
    excluded = {int(np.argmin(np.abs((az - e + 180.0) % 360.0 - 180.0)))
                for e in sc.geometry.exclude_azimuths}
    pool = [p for p in range(1, len(az)) if p not in excluded]
    comp = tuple(int(p) for p in rng.choice(pool, size=n_competing, replace=False))
    occupied = (0,) + comp
    order = rng.permutation(len(occupied))
    channels = tuple(int(occupied[i]) for i in order)
    truth = channels.index(0)
    return ConcreteScene(int(combo_seed), n_competing, 0, comp, channels, truth, conv_seed, noise_seed)
