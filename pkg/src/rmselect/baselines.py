"""Turn-taking baselines driven by oracle voice activity, and a random floor.

Both NCC and MOG compare each candidate's binary VAD sequence with the
listener's own-voice sequence over the last ``D`` frames. All window sums are
integer prefix sums, so results are exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import StftConfig

__all__ = [
    "VadSequence",
    "oracle_vad",
    "ncc_scores",
    "ncc_select",
    "mog_scores",
    "mog_select",
    "ncc_trace",
    "mog_trace",
    "random_select",
    "random_trace",
]


@dataclass(frozen=True)
class VadSequence:
    values: np.ndarray
    hop: int = 256

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or not np.all((v == 0) | (v == 1)):
            raise ValueError("VAD values must be a 1-D binary sequence")
        object.__setattr__(self, "values", v.astype(np.int64))

    def __len__(self):
        return len(self.values)

    def save_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vad"])
            w.writerows([[int(v)] for v in self.values])
        return path

    @classmethod
    def load_csv(cls, path, hop: int = 256) -> "VadSequence":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows and not rows[0][0].strip().lstrip("-").isdigit():
            rows = rows[1:]
        return cls(np.array([int(r[0]) for r in rows if r]), hop)


def oracle_vad(clean: np.ndarray, cfg: StftConfig = StftConfig(), threshold_db: float = -40.0) -> VadSequence:
    """Frame is active when its RMS exceeds the signal-wide RMS by ``threshold_db``.

    Frames follow the STFT grid (``frame_len`` samples every ``hop``).
    """
    x = np.asarray(clean, dtype=float)
    n_frames = cfg.num_frames(len(x))
    if n_frames == 0:
        raise ValueError("signal shorter than one frame")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len)[:: cfg.hop][:n_frames]
    frame_ms = np.mean(frames ** 2, axis=1)
    global_ms = np.mean(x ** 2)
    if global_ms == 0.0:
        return VadSequence(np.zeros(n_frames, dtype=int), cfg.hop)
    thresh = global_ms * 10.0 ** (threshold_db / 10.0)
    return VadSequence((frame_ms > thresh).astype(int), cfg.hop)


def _prefix(x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(x) + 1, dtype=np.int64)
    np.cumsum(x, out=out[1:])
    return out


def _ncc_lag_corr(v0: np.ndarray, vr: np.ndarray, window: int, lag: int) -> np.ndarray:
    """Pearson correlation of ``v0[j]`` with ``vr[j + lag]`` for every window end ``l``.

    Only pairs with both indices inside ``[l - window + 1, l]`` are used; fewer
    than two pairs, or zero variance on either side, gives 0.
    """
    L = len(v0)
    out = np.zeros(L)
    n = window - abs(lag)
    if n < 2:
        return out
    if lag >= 0:
        a = v0[: L - lag]  # a[j] = v0[j]
        b = vr[lag:]  # b[j] = vr[j + lag]
        # window end l uses j in [l - window + 1, l - lag]
        hi = np.arange(L) - lag + 1
    else:
        a = v0[-lag:]  # a[i] = v0[i - lag]; i = j + lag
        b = vr[: L + lag]
        # i runs over [l - window + 1, l + lag]
        hi = np.arange(L) + lag + 1
    lo = hi - n
    ok = lo >= 0
    hi, lo = hi[ok], lo[ok]
    pa, pb, pab = _prefix(a), _prefix(b), _prefix(a * b)
    sa = pa[hi] - pa[lo]
    sb = pb[hi] - pb[lo]
    sab = pab[hi] - pab[lo]
    # binary: sum of squares equals sum
    cov = n * sab - sa * sb
    var_a = n * sa - sa * sa
    var_b = n * sb - sb * sb
    den = var_a * var_b
    r = np.zeros(len(hi))
    nz = den > 0
    r[nz] = cov[nz] / np.sqrt(den[nz].astype(float))
    out[ok] = r
    return out


def ncc_scores(v0: VadSequence, candidates, window: int, max_lag: int) -> np.ndarray:
    """``(1 - min_p R_0r(p)) / 2`` for every window end; returns ``(L, R)``."""
    a = v0.values
    out = np.zeros((len(a), len(candidates)))
    lags = range(-max_lag, max_lag + 1)
    for r, c in enumerate(candidates):
        b = c.values
        if len(b) != len(a):
            raise ValueError("VAD sequences must be aligned")
        rmin = np.full(len(a), np.inf)
        for p in lags:
            if window - abs(p) < 2:
                continue
            np.minimum(rmin, _ncc_lag_corr(a, b, window, p), out=rmin)
        rmin[~np.isfinite(rmin)] = 0.0
        out[:, r] = (1.0 - rmin) / 2.0
    return out


def mog_scores(v0: VadSequence, candidates, window: int) -> np.ndarray:
    """Windowed mean of ``(V_0 - V_r)^2``; returns ``(L, R)``."""
    a = v0.values
    L = len(a)
    ends = np.arange(L)
    lo = np.maximum(ends - window + 1, 0)
    counts = ends - lo + 1
    out = np.zeros((L, len(candidates)))
    for r, c in enumerate(candidates):
        if len(c.values) != L:
            raise ValueError("VAD sequences must be aligned")
        p = _prefix((a - c.values) ** 2)
        out[:, r] = (p[ends + 1] - p[lo]) / counts
    return out


def _lag_frames(seconds: float, hop: int, sample_rate: int) -> int:
    return int(round(seconds * sample_rate / hop))


def ncc_select(v0: VadSequence, candidates, T_int: float, lag_range: int | None = None,
               sample_rate: int = 16000) -> int:
    """NCC decision using the last ``T_int`` seconds of the sequences."""
    window = max(1, int(round(T_int * sample_rate / v0.hop)))
    if lag_range is None:
        lag_range = _lag_frames(2.0, v0.hop, sample_rate)
    s = ncc_scores(v0, candidates, min(window, len(v0)), lag_range)
    return int(np.argmax(s[-1]))


def mog_select(v0: VadSequence, candidates, T_int: float, sample_rate: int = 16000) -> int:
    window = max(1, int(round(T_int * sample_rate / v0.hop)))
    s = mog_scores(v0, candidates, min(window, len(v0)))
    return int(np.argmax(s[-1]))


def ncc_trace(v0, candidates, window: int, max_lag: int) -> np.ndarray:
    return np.argmax(ncc_scores(v0, candidates, window, max_lag), axis=1)


def mog_trace(v0, candidates, window: int) -> np.ndarray:
    return np.argmax(mog_scores(v0, candidates, window), axis=1)


def random_select(R: int, seed=None, size: int | None = None):
    """Uniform draw over ``R`` channels (the chance floor 1/R)."""
    if R < 1:
        raise ValueError("need at least one channel")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if size is None:
        return int(rng.integers(R))
    return rng.integers(R, size=size)


def random_trace(R: int, num_frames: int, seed) -> np.ndarray:
    return random_select(R, seed, num_frames)
