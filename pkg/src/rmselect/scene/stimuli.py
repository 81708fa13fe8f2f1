"""Speech material: a synthetic talker corpus, a WAV corpus loader, turn-taking
conversations and speech-shaped noise.

The synthetic corpus is a source-filter babble generator: a jittered glottal
pulse train through three vowel formants, interleaved with fricative noise
bursts, grouped into syllables, words and pauses. It is not intelligible
speech, but it has speech-like spectro-temporal modulation and a long-term
spectrum with the usual low-frequency emphasis, which is all the simulations
rely on.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from ..dsp import read_wav

__all__ = [
    "TalkerVoice",
    "SyntheticCorpus",
    "WavCorpus",
    "CorpusError",
    "TurnModel",
    "Conversation",
    "turn_schedule",
    "synth_conversation",
    "long_term_spectrum",
    "synth_ssn",
    "speech_template",
    "third_octave_bands",
    "band_levels",
]

ACTIVE_RMS = 0.05

# (F1, F2, F3) in Hz for an adult male vocal tract
VOWELS = np.array(
    [
        [730, 1090, 2440],
        [270, 2290, 3010],
        [300, 870, 2240],
        [530, 1840, 2480],
        [570, 840, 2410],
        [660, 1720, 2410],
        [490, 1350, 1690],
        [440, 1020, 2240],
    ],
    dtype=float,
)
BANDWIDTHS = np.array([80.0, 110.0, 160.0])


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class TalkerVoice:
    f0: float = 120.0
    tract_scale: float = 1.0
    syllable_rate: float = 4.5


def _resonator(freq: float, bw: float, fs: int):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    b = [1.0 - r]
    return b, a


def _ramp(n: int, fs: int, attack: float = 0.02) -> np.ndarray:
    env = np.ones(n)
    k = min(int(attack * fs), n // 2)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        env[:k] = ramp
        env[n - k:] = ramp[::-1]
    return env


def _voiced(n: int, voice: TalkerVoice, formants, rng, fs: int) -> np.ndarray:
    t = np.arange(n) / fs
    contour = 1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(1.5, 4.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = voice.f0 * rng.uniform(0.9, 1.1) * contour * (1.0 - 0.1 * t / max(t[-1], 1e-9))
    f0 = f0 * (1.0 + 0.01 * rng.standard_normal(n))
    phase = np.cumsum(f0 / fs) + rng.uniform()
    pulses = np.diff(np.floor(phase), prepend=np.floor(phase[0])).astype(float)
    # glottal tilt, then the vocal tract
    x = sps.lfilter([1.0], [1.0, -0.96], pulses)
    x += 0.02 * rng.standard_normal(n)
    for f, bw in zip(formants, BANDWIDTHS):
        if f < 0.45 * fs:
            b, a = _resonator(f, bw, fs)
            x = sps.lfilter(b, a, x)
    return sps.lfilter([1.0, -0.9], [1.0], x)


def _fricative(n: int, rng, fs: int) -> np.ndarray:
    lo = rng.uniform(2000.0, 3500.0)
    hi = min(lo + rng.uniform(1500.0, 3500.0), 0.45 * fs)
    sos = sps.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sps.sosfilt(sos, rng.standard_normal(n))


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _highpass(fs: int, cutoff: float = 70.0):
    # glottal pulse trains carry DC; recorded speech does not
    return sps.butter(2, cutoff, btype="highpass", fs=fs, output="sos")


def synth_speech(voice: TalkerVoice, duration: float, rng, fs: int = 16000) -> np.ndarray:
    """Continuous speech-like babble of ``duration`` seconds, active RMS ``ACTIVE_RMS``."""
    n_total = int(round(duration * fs))
    out = np.zeros(n_total)
    pos = 0
    while pos < n_total:
        n_syl = int(rng.integers(1, 5))
        for _ in range(n_syl):
            if pos >= n_total:
                break
            syl = rng.uniform(0.6, 1.4) / voice.syllable_rate
            parts = []
            if rng.uniform() < 0.45:
                nf = int(rng.uniform(0.03, 0.08) * fs)
                parts.append(0.35 * _unit_rms(_fricative(nf, rng, fs)) * _ramp(nf, fs, 0.008))
            nv = int(syl * fs)
            formants = VOWELS[rng.integers(len(VOWELS))] * voice.tract_scale
            formants = formants * rng.uniform(0.92, 1.08, size=3)
            v = _unit_rms(sps.sosfilt(_highpass(fs), _voiced(nv, voice, formants, rng, fs)))
            v = v * _ramp(nv, fs, 0.025)
            parts.append(v * rng.uniform(0.6, 1.0))
            seg = np.concatenate(parts)
            end = min(pos + len(seg), n_total)
            out[pos:end] += seg[: end - pos]
            pos = end + int(rng.uniform(0.0, 0.03) * fs)
        pos += int(rng.uniform(0.06, 0.18) * fs)
    active = np.abs(out) > 0
    if active.any():
        out *= ACTIVE_RMS / np.sqrt(np.mean(out[active] ** 2))
    return out


class SyntheticCorpus:
    """Deterministic set of synthetic voices; ``utterance`` draws fresh material."""

    def __init__(self, num_talkers: int = 24, seed: int = 0, sample_rate: int = 16000):
        rng = np.random.default_rng([seed, 7919])
        self.sample_rate = sample_rate
        self.voices = []
        for i in range(num_talkers):
            female = i % 2 == 1
            f0 = rng.uniform(170.0, 240.0) if female else rng.uniform(90.0, 140.0)
            scale = rng.uniform(1.1, 1.22) if female else rng.uniform(0.92, 1.05)
            self.voices.append(TalkerVoice(f0, scale, rng.uniform(3.8, 5.2)))

    @property
    def num_talkers(self) -> int:
        return len(self.voices)

    def utterance(self, talker: int, duration: float, rng) -> np.ndarray:
        return synth_speech(self.voices[talker], duration, rng, self.sample_rate)


class WavCorpus:
    """Mono WAV utterances assigned to talkers by ``manifest.csv`` (columns talker, path)."""

    def __init__(self, directory, sample_rate: int = 16000):
        directory = Path(directory)
        manifest = directory / "manifest.csv"
        if not manifest.exists():
            raise CorpusError(
                f"speech corpus manifest {manifest} not found; point stimuli.corpus at a directory "
                "holding manifest.csv (columns talker,path) or use 'synthetic'"
            )
        self.sample_rate = sample_rate
        talkers: dict[str, list[np.ndarray]] = {}
        with open(manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                x, rate = read_wav(directory / row["path"])
                if rate != sample_rate:
                    raise CorpusError(f"{row['path']}: {rate} Hz, expected {sample_rate} Hz")
                talkers.setdefault(row["talker"], []).append(x[0])
        if not talkers:
            raise CorpusError(f"{manifest} lists no utterances")
        self.names = sorted(talkers)
        self.utterances = [talkers[n] for n in self.names]

    @property
    def num_talkers(self) -> int:
        return len(self.names)

    def utterance(self, talker: int, duration: float, rng) -> np.ndarray:
        n = int(round(duration * self.sample_rate))
        pool = self.utterances[talker]
        if sum(len(u) for u in pool) == 0:
            raise CorpusError(f"talker {self.names[talker]} has no audio")
        out = []
        total = 0
        while total < n:
            u = pool[int(rng.integers(len(pool)))]
            out.append(u)
            total += len(u)
        x = np.concatenate(out)
        start = int(rng.integers(0, len(x) - n + 1))
        return x[start : start + n]


@dataclass(frozen=True)
class TurnModel:
    mean_turn: float = 2.0
    turn_shape: float = 4.0  # gamma shape of turn durations
    gap: float = 0.2
    overlap_prob: float = 0.05
    mean_overlap: float = 0.4


def turn_schedule(duration: float, model: TurnModel, rng) -> list[tuple[int, float, float]]:
    """Alternating turns ``(speaker, start, end)`` for a two-party conversation."""
    turns = []
    speaker = int(rng.integers(2))
    t = rng.uniform(0.0, model.mean_turn)  # random phase so streams are not aligned
    while t < duration:
        length = rng.gamma(model.turn_shape, model.mean_turn / model.turn_shape)
        end = t + length
        turns.append((speaker, t, min(end, duration)))
        if rng.uniform() < model.overlap_prob:
            ov = min(rng.exponential(model.mean_overlap), 0.8 * length)
            t = end - ov
        else:
            t = end + rng.uniform(0.5, 1.5) * model.gap
        speaker = 1 - speaker
    return turns


def _render_turns(corpus, talkers, turns, duration, rng, fs) -> list[np.ndarray]:
    n = int(round(duration * fs))
    streams = [np.zeros(n) for _ in talkers]
    for who, start, end in turns:
        i0, i1 = int(round(start * fs)), int(round(end * fs))
        if i1 - i0 < 2 or talkers[who] is None:
            continue
        seg = corpus.utterance(talkers[who], (i1 - i0) / fs, rng)
        streams[who][i0 : i0 + len(seg)] += seg[: i1 - i0] * _ramp(len(seg[: i1 - i0]), fs, 0.01)
    return streams


@dataclass
class Conversation:
    own_voice: np.ndarray
    target: np.ndarray
    competing: list = field(default_factory=list)
    talker_ids: dict = field(default_factory=dict)


def synth_conversation(corpus, n_competing: int, duration: float, seed,
                       model: TurnModel = TurnModel()) -> Conversation:
    """Own voice and target hold one conversation; competing talkers pair up among themselves.

    An odd competing talker out converses with a silent partner.
    """
    if corpus.num_talkers < n_competing + 2:
        raise CorpusError(
            f"corpus has {corpus.num_talkers} talkers; {n_competing + 2} are needed"
        )
    fs = corpus.sample_rate
    rng = np.random.default_rng(seed)
    ids = rng.permutation(corpus.num_talkers)[: n_competing + 2]
    own_id, target_id, comp_ids = int(ids[0]), int(ids[1]), [int(i) for i in ids[2:]]
    turns = turn_schedule(duration, model, rng)
    own, target = _render_turns(corpus, [own_id, target_id], turns, duration, rng, fs)
    competing = []
    for j in range(0, n_competing, 2):
        pair = comp_ids[j : j + 2]
        talkers = pair if len(pair) == 2 else [pair[0], None]
        streams = _render_turns(corpus, talkers, turn_schedule(duration, model, rng), duration, rng, fs)
        competing.extend(streams[: len(pair)])
    return Conversation(own, target, competing,
                        {"own_voice": own_id, "target": target_id, "competing": comp_ids})


def long_term_spectrum(signals, fs: int = 16000, nfft: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD averaged over a list of signals; returns (freqs, psd)."""
    acc = None
    count = 0
    for x in signals:
        x = np.asarray(x, float)
        if len(x) < nfft:
            continue
        f, p = sps.welch(x, fs=fs, nperseg=nfft, noverlap=nfft // 2)
        acc = p * len(x) if acc is None else acc + p * len(x)
        count += len(x)
    if acc is None:
        raise CorpusError("no signal long enough for a long-term spectrum")
    return f, acc / count


def speech_template(corpus, seconds: float = 20.0) -> tuple[np.ndarray, np.ndarray]:
    """Long-term magnitude spectrum ``(freqs, mag)`` of up to eight corpus talkers."""
    if corpus.num_talkers < 1:
        raise CorpusError("corpus is empty")
    rng = np.random.default_rng([0, 4242])
    talkers = range(min(corpus.num_talkers, 8))
    per = seconds / len(talkers)
    freqs, psd = long_term_spectrum([corpus.utterance(t, per, rng) for t in talkers], corpus.sample_rate)
    return freqs, np.sqrt(psd)


def synth_ssn(template=None, corpus=None, duration: float = 30.0, seed=0,
              fs: int = 16000, corpus_seconds: float = 20.0) -> np.ndarray:
    """Gaussian noise shaped to a long-term speech spectrum, unit RMS.

    ``template`` is ``(freqs, magnitude)`` or a magnitude array on a uniform
    grid from 0 to fs/2. Without a template the spectrum is measured from
    ``corpus``.
    """
    if template is None:
        if corpus is None:
            raise CorpusError("synth_ssn needs a spectral template or a speech corpus")
        freqs, mag = speech_template(corpus, corpus_seconds)
    elif isinstance(template, tuple):
        freqs, mag = (np.asarray(v, float) for v in template)
    else:
        mag = np.asarray(template, float)
        freqs = np.linspace(0.0, fs / 2.0, len(mag))
    if np.any(mag < 0) or not np.any(mag > 0):
        raise ValueError("spectral template must be non-negative and not all zero")
    n = int(round(duration * fs))
    rng = np.random.default_rng(seed)
    white = np.fft.rfft(rng.standard_normal(n))
    grid = np.fft.rfftfreq(n, 1.0 / fs)
    shaped = np.fft.irfft(white * np.interp(grid, freqs, mag), n=n)
    return _unit_rms(shaped)


def third_octave_bands(fmin: float = 100.0, fmax: float = 7000.0) -> list[tuple[float, float]]:
    centres = 1000.0 * 2.0 ** (np.arange(-30, 31) / 3.0)
    centres = centres[(centres >= fmin) & (centres <= fmax)]
    return [(c * 2 ** (-1 / 6), c * 2 ** (1 / 6)) for c in centres]


def band_levels(freqs: np.ndarray, psd: np.ndarray, bands) -> np.ndarray:
    """Band power in dB for each (lo, hi) band."""
    out = []
    for lo, hi in bands:
        sel = (freqs >= lo) & (freqs < hi)
        out.append(10.0 * np.log10(np.sum(psd[sel]) + 1e-300))
    return np.array(out)
