"""Rendering of hearing-aid and remote-channel signals from a scenario.

All talker-to-sensor paths of a layout are computed once as an impulse
response bank and reused across combinations, since only the occupancy of the
fixed positions changes between draws. Mixtures are always formed as the sum
of the retained stems, so the stem-sum identity holds exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import oaconvolve

from ..array_model import (
    SteeringVector,
    TransferFunctionSet,
    default_ha_offsets,
    load_ir_set,
    perturb_steering,
    ratf_from_atf,
)
from ..beamforming import beamform, fixed_mpdr
from ..dsp import StftConfig, StftFrameBlock, stft_analyze, stft_synthesize, write_wav
from .noise import calibrate_snr, isotropic_noise
from .rir import RoomSpec, image_rirs
from .scenario import ConcreteScene, Scenario
from .stimuli import SyntheticCorpus, TurnModel, WavCorpus, speech_template, synth_conversation, synth_ssn

__all__ = ["Layout", "RenderedScene", "layout_for", "rir_bank", "make_corpus", "render",
           "render_beam_bank", "render_scene", "export_scene"]

NOISE_RING_SOURCES = 8


@dataclass(frozen=True)
class Layout:
    """Physical positions of one scenario; sources and sensors are indexed globally."""

    sources: np.ndarray  # (S, 3) candidate talker positions
    ha_mics: np.ndarray  # (M, 3)
    remote_mics: np.ndarray  # (Q, 3) close-talking RMs or table array mics
    noise_sources: np.ndarray  # (B, 3) isotropic noise directions
    source_labels: tuple  # scenario position id of each source
    head: np.ndarray
    yaw_deg: float


def _ring(center, radius, angles_deg, height):
    a = np.deg2rad(np.asarray(angles_deg, float))
    pts = np.stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a),
                    np.full(len(a), float(height))], axis=1)
    return pts


def _rot(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])


def loudspeaker_angle(label: int, sc: Scenario) -> float:
    """Angle around the table centre; the listener sits at 0 deg facing the target."""
    bb = sc.beam_bank
    step = 360.0 / bb.num_loudspeakers
    return (180.0 + step / 2.0 + step * (label - bb.target)) % 360.0


def layout_for(sc: Scenario) -> Layout:
    g = sc.geometry
    offsets = default_ha_offsets(g.ha_lateral, g.ha_spacing)
    if sc.mode == "table_beam_bank":
        bb = sc.beam_bank
        c = np.asarray(bb.table_center, float)
        labels = tuple(range(1, bb.num_loudspeakers + 1))
        spk = _ring(c, bb.loudspeaker_radius, [loudspeaker_angle(l, sc) for l in labels],
                    bb.loudspeaker_height)
        head = _ring(c, bb.loudspeaker_radius, [0.0], bb.loudspeaker_height)[0]
        to_target = spk[labels.index(bb.target)] - head
        yaw = float(np.rad2deg(np.arctan2(to_target[1], to_target[0])))
        table = _ring(c, bb.table_radius, np.arange(bb.table_mics) * 360.0 / bb.table_mics, c[2])
        dims = np.asarray(sc.room.dims, float)
        noise_r = 0.8 * min(dims[0], dims[1]) / 2.0
        room_c = np.array([dims[0] / 2.0, dims[1] / 2.0])
        ang = np.arange(NOISE_RING_SOURCES) * 360.0 / NOISE_RING_SOURCES
        noise = _ring(room_c, noise_r, ang, 1.0)
        noise[1::2, 2] = min(2.0, dims[2] - 0.3)
        return Layout(spk, head + offsets @ _rot(yaw).T, table, noise, labels, head, yaw)
    head = np.asarray(g.ha_position, float)
    az = np.arange(g.num_positions) * 360.0 / g.num_positions
    talkers = _ring(head, g.talker_radius, az, g.talker_height)
    rms = _ring(head, g.talker_radius - g.rm_offset, az, g.talker_height)
    return Layout(talkers, head + offsets, rms, talkers, tuple(range(g.num_positions)), head, 0.0)


def _cache_dir() -> Path | None:
    d = os.environ.get("RMSELECT_CACHE_DIR", str(Path.home() / ".cache" / "rmselect"))
    if d in ("", "0", "off"):
        return None
    return Path(d)


_MEMO: dict = {}


def rir_bank(room: RoomSpec, sources: np.ndarray, sensors: np.ndarray, fs: int) -> np.ndarray:
    """``(source, sensor, tap)`` impulse responses, memoised in memory and on disk."""
    key_data = json.dumps({"room": [list(room.dims), room.t60, room.absorption, room.max_image_order,
                                    room.speed_of_sound, room.rir_length],
                           "src": np.round(sources, 9).tolist(), "mic": np.round(sensors, 9).tolist(),
                           "fs": fs, "v": 1})
    key = hashlib.sha256(key_data.encode()).hexdigest()[:24]
    if key in _MEMO:
        return _MEMO[key]
    cache = _cache_dir()
    path = None if cache is None else cache / f"rirbank_{key}.npy"
    if path is not None and path.exists():
        bank = np.load(path)
    else:
        bank = np.stack([image_rirs(room, s, sensors, fs) for s in sources])
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{os.getpid()}.tmp.npy")
                np.save(tmp, bank)
                os.replace(tmp, path)
            except OSError:
                pass
    if len(_MEMO) > 4:
        _MEMO.clear()
    _MEMO[key] = bank
    return bank


_CORPORA: dict = {}


def make_corpus(sc: Scenario):
    st = sc.stimuli
    if st.corpus == "synthetic":
        key = ("synthetic", st.num_talkers, st.corpus_seed, sc.sample_rate)
        if key not in _CORPORA:
            _CORPORA[key] = SyntheticCorpus(st.num_talkers, st.corpus_seed, sc.sample_rate)
    else:
        path = sc.resolve(st.corpus)
        key = ("wav", str(path), sc.sample_rate)
        if key not in _CORPORA:
            _CORPORA[key] = WavCorpus(path, sc.sample_rate)
    return _CORPORA[key]


_TEMPLATES: dict = {}


def _template(corpus):
    key = id(corpus)
    if key not in _TEMPLATES:
        _TEMPLATES[key] = speech_template(corpus)
    return _TEMPLATES[key]


@dataclass
class RenderedScene:
    ha_signals: np.ndarray  # (M, n)
    remote_channels: np.ndarray  # (R, n)
    clean_stems: np.ndarray  # (S, M + R, n); talker 0 is the target
    noise_stems: np.ndarray  # (M + R, n)
    own_voice: np.ndarray  # (n,)
    talker_signals: np.ndarray  # (S, n) dry talker signals, for oracle VADs
    truth_channel: int
    channel_talker: tuple  # talker index carried by each remote channel, -1 if none
    steering: SteeringVector
    sample_rate: int
    scene: ConcreteScene | None = None
    info: dict = field(default_factory=dict)

    @property
    def num_ha(self) -> int:
        return self.ha_signals.shape[0]

    @property
    def num_remote(self) -> int:
        return self.remote_channels.shape[0]

    def mixture(self) -> np.ndarray:
        return np.concatenate([self.ha_signals, self.remote_channels])


def _frontal_steering(sc: Scenario, lay: Layout, target: int, scene: ConcreteScene,
                      cfg: StftConfig) -> SteeringVector:
    """Head-steered RATF from direct-path propagation, optionally perturbed."""
    room = sc.room.spec()
    direct = RoomSpec(room.dims, 0.0, None, 0, room.speed_of_sound, room.rir_length)
    st = sc.steering
    if st.mode == "ir_set":
        tfs = load_ir_set(sc.resolve(st.ir_set), cfg)
        return ratf_from_atf(tfs, tfs.nearest_azimuth(0.0))
    if sc.mode == "table_beam_bank":
        irs = image_rirs(direct, lay.sources[target], lay.ha_mics, sc.sample_rate)[None]
        tfs = TransferFunctionSet.from_impulse_responses(irs, cfg.fft_size, [0.0])
        d = ratf_from_atf(tfs, 0)
    else:
        az = np.arange(len(lay.sources)) * 360.0 / len(lay.sources)
        irs = rir_bank(direct, lay.sources, lay.ha_mics, sc.sample_rate)
        tfs = TransferFunctionSet.from_impulse_responses(irs, cfg.fft_size, az)
        d = ratf_from_atf(tfs, target)
        if st.mode == "rotate":
            return perturb_steering(d, rotate=st.rotate_deg, transfer=tfs)
    if st.mode == "jitter" and st.jitter > 0:
        return perturb_steering(d, jitter=st.jitter, seed=[sc.sweep.seed, 7, scene.combo_seed])
    return d


def _convolve(x: np.ndarray, irs: np.ndarray, n: int) -> np.ndarray:
    return oaconvolve(x[None, :], irs, axes=-1)[:, :n]


def _conversation(sc: Scenario, scene: ConcreteScene):
    corpus = make_corpus(sc)
    st = sc.stimuli
    model = TurnModel(mean_turn=st.mean_turn, gap=st.gap, overlap_prob=st.overlap_prob)
    conv = synth_conversation(corpus, scene.n_competing, sc.duration, scene.conversation_seed, model)
    return corpus, conv


def render(sc: Scenario, scene: ConcreteScene, cfg: StftConfig | None = None) -> RenderedScene:
    """Close-talking scene: one RM 0.2 m in front of each candidate talker."""
    if sc.mode != "close_talking_rms":
        raise ValueError("render() handles close-talking scenarios; use render_beam_bank()")
    fs = sc.sample_rate
    cfg = cfg or StftConfig(sample_rate=fs)
    n = int(round(sc.duration * fs))
    lay = layout_for(sc)
    room = sc.room.spec()
    M = len(lay.ha_mics)
    sensors = np.concatenate([lay.ha_mics, lay.remote_mics])
    bank = rir_bank(room, lay.sources, sensors, fs)  # (16, M + 16, taps)
    corpus, conv = _conversation(sc, scene)
    dry = np.stack([conv.target] + list(conv.competing))
    positions = scene.talker_positions
    chan = list(scene.channel_positions)
    cols = list(range(M)) + [M + p for p in chan]
    stems = np.stack([_convolve(dry[i], bank[p][cols], n) for i, p in enumerate(positions)])

    template = _template(corpus)
    ss = np.random.SeedSequence(scene.noise_seed)
    iso_seed, rm_seed = ss.spawn(2)
    iso = isotropic_noise(bank[:, :M], n, iso_seed, template=template, fs=fs)
    g = calibrate_snr(stems[0, 0], iso[0], sc.noise.ssn_snr_db)
    noise = np.zeros((M + len(chan), n))
    noise[:M] = g * iso
    if sc.noise.rm_noise_mode == "independent":
        level = np.sqrt(np.mean(noise[0] ** 2))
        for r, s in enumerate(rm_seed.spawn(len(chan))):
            noise[M + r] = level * synth_ssn(template, duration=sc.duration, seed=s, fs=fs)[:n]
    mix = stems.sum(axis=0) + noise
    talker_of = {p: i for i, p in enumerate(positions)}
    steering = _frontal_steering(sc, lay, 0, scene, cfg)
    return RenderedScene(
        ha_signals=mix[:M], remote_channels=mix[M:], clean_stems=stems, noise_stems=noise,
        own_voice=conv.own_voice, talker_signals=dry, truth_channel=scene.truth_channel,
        channel_talker=tuple(talker_of.get(p, -1) for p in chan), steering=steering,
        sample_rate=fs, scene=scene,
        info={"noise_gain": g, "talker_ids": conv.talker_ids, "channel_positions": tuple(chan)},
    )


def _beam_stems(weights: np.ndarray, signals: np.ndarray, cfg: StftConfig, n: int) -> np.ndarray:
    """Apply fixed weights ``(K, Q)`` to ``(Q, n)`` signals; returns ``(n,)``."""
    blk = stft_analyze(signals, cfg)
    y = beamform(weights, blk.data)[:, :, None]
    out = stft_synthesize(StftFrameBlock(y, cfg))[0]
    res = np.zeros(n)
    res[: min(n, len(out))] = out[:n]
    return res


def render_beam_bank(sc: Scenario, scene: ConcreteScene, cfg: StftConfig | None = None) -> RenderedScene:
    """Table-array scene: remote channels are fixed MPDR beams of the table array.

    Each beam uses time-invariant weights from the table array's noisy CPSDM
    averaged over the whole signal, steered with the true (reverberant,
    fft_size-truncated) ATF of its loudspeaker.
    """
    if sc.mode != "table_beam_bank":
        raise ValueError("render_beam_bank() needs a table_beam_bank scenario")
    fs = sc.sample_rate
    cfg = cfg or StftConfig(sample_rate=fs)
    n = int(round(sc.duration * fs))
    lay = layout_for(sc)
    room = sc.room.spec()
    M, Q = len(lay.ha_mics), len(lay.remote_mics)
    sensors = np.concatenate([lay.ha_mics, lay.remote_mics])
    bank = rir_bank(room, lay.sources, sensors, fs)
    noise_bank = rir_bank(room, lay.noise_sources, sensors, fs)
    labels = list(lay.source_labels)
    missing = [b for b in scene.channel_positions if b not in labels]
    if missing:
        raise ValueError(f"beam targets {missing} have no transfer function")
    corpus, conv = _conversation(sc, scene)
    dry = np.stack([conv.target] + list(conv.competing))
    positions = scene.talker_positions
    sensor_stems = np.stack([_convolve(dry[i], bank[labels.index(p)], n) for i, p in enumerate(positions)])
    template = _template(corpus)
    iso = isotropic_noise(noise_bank, n, np.random.SeedSequence(scene.noise_seed), template=template, fs=fs)
    g = calibrate_snr(sensor_stems[0, 0], iso[0], sc.noise.ssn_snr_db)
    sensor_noise = g * iso
    table_mix = sensor_stems[:, M:].sum(axis=0) + sensor_noise[M:]
    block = stft_analyze(table_mix, cfg)
    atfs = TransferFunctionSet.from_impulse_responses(bank[:, M:], cfg.fft_size)
    R = len(scene.channel_positions)
    S = len(positions)
    stems = np.zeros((S, M + R, n))
    stems[:, :M] = sensor_stems[:, :M]
    noise = np.zeros((M + R, n))
    noise[:M] = sensor_noise[:M]
    for r, label in enumerate(scene.channel_positions):
        d = ratf_from_atf(atfs, labels.index(label)).d
        w = fixed_mpdr(block, d)
        for i in range(S):
            stems[i, M + r] = _beam_stems(w, sensor_stems[i, M:], cfg, n)
        noise[M + r] = _beam_stems(w, sensor_noise[M:], cfg, n)
    mix = stems.sum(axis=0) + noise
    talker_of = {p: i for i, p in enumerate(positions)}
    steering = _frontal_steering(sc, lay, labels.index(scene.target_position), scene, cfg)
    return RenderedScene(
        ha_signals=mix[:M], remote_channels=mix[M:], clean_stems=stems, noise_stems=noise,
        own_voice=conv.own_voice, talker_signals=dry, truth_channel=scene.truth_channel,
        channel_talker=tuple(talker_of.get(p, -1) for p in scene.channel_positions),
        steering=steering, sample_rate=fs, scene=scene,
        info={"noise_gain": g, "talker_ids": conv.talker_ids, "yaw_deg": lay.yaw_deg,
              "channel_positions": tuple(scene.channel_positions)},
    )


def render_scene(sc: Scenario, scene: ConcreteScene, cfg: StftConfig | None = None) -> RenderedScene:
    if sc.mode == "table_beam_bank":
        return render_beam_bank(sc, scene, cfg)
    return render(sc, scene, cfg)


def export_scene(rs: RenderedScene, out_dir) -> dict:
    """Write mixture and stem WAVs (float32) plus a truth sidecar; returns the sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = rs.sample_rate
    files = {
        "ha.wav": rs.ha_signals,
        "noise_stems.wav": rs.noise_stems,
        "own_voice.wav": rs.own_voice,
    }
    for r in range(rs.num_remote):
        files[f"remote_{r + 1}.wav"] = rs.remote_channels[r]
    for i in range(rs.clean_stems.shape[0]):
        files[f"stem_talker{i}.wav"] = rs.clean_stems[i]
    hashes = {}
    for name, x in files.items():
        p = write_wav(out / name, x, fs, fmt="float32")
        hashes[name] = hashlib.sha256(p.read_bytes()).hexdigest()
    rs.steering.save(out / "steering.npz")
    sidecar = {
        "truth_channel": rs.truth_channel,
        "channel_talker": list(rs.channel_talker),
        "num_ha": rs.num_ha,
        "num_remote": rs.num_remote,
        "num_talkers": int(rs.clean_stems.shape[0]),
        "sample_rate": fs,
        "combo_seed": None if rs.scene is None else rs.scene.combo_seed,
        "channel_positions": list(rs.info.get("channel_positions", ())),
        "sha256": hashes,
    }
    (out / "truth.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return sidecar
