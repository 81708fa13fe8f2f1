"""Allen-Berkley image-source room impulse responses for a shoebox room.

Each image contributes ``beta^reflections / (4 pi dist)`` at delay
``dist / c``. Fractional delays use an 8-tap Hann-windowed sinc kernel
normalised to unit DC gain, so the pulse area equals the image amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidGeometryError",
    "RoomSpec",
    "sabine_absorption",
    "image_rir",
    "image_rirs",
    "schroeder_decay",
    "estimate_t60",
    "direct_path_delay",
]

SPEED_OF_SOUND = 343.0
FD_TAPS = 8


class InvalidGeometryError(ValueError):
    pass


def sabine_absorption(dims, t60: float) -> float:
    """Uniform absorption coefficient giving ``t60`` by Sabine's formula."""
    lx, ly, lz = (float(v) for v in dims)
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * t60)
    if alpha > 1.0:
        raise ValueError(f"T60 of {t60} s is too short for a {lx}x{ly}x{lz} m room")
    return alpha


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple = (7.0, 6.0, 3.0)
    t60: float = 0.3
    # per-wall absorption (x1, x2, y1, y2, z1, z2); overrides t60 when given
    absorption: tuple | None = None
    max_image_order: int = -1  # -1: limited only by the RIR length
    speed_of_sound: float = SPEED_OF_SOUND
    rir_length: float | None = None  # seconds; default from the decay time

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError("room dims must be three positive lengths")
        object.__setattr__(self, "dims", dims)
        if self.t60 < 0:
            raise ValueError("t60 must be non-negative")
        if self.absorption is not None:
            a = tuple(float(v) for v in self.absorption)
            if len(a) != 6 or min(a) < 0 or max(a) > 1:
                raise ValueError("absorption needs six coefficients in [0, 1]")
            object.__setattr__(self, "absorption", a)
        if self.max_image_order < -1:
            raise ValueError("max_image_order must be >= 0 (or -1 for unlimited)")

    @property
    def anechoic(self) -> bool:
        if self.absorption is not None:
            return all(a == 1.0 for a in self.absorption)
        return self.t60 == 0.0

    def wall_reflection(self) -> np.ndarray:
        """Pressure reflection coefficients ordered (x1, x2, y1, y2, z1, z2)."""
        if self.absorption is not None:
            alpha = np.array(self.absorption)
        elif self.t60 == 0.0:
            alpha = np.ones(6)
        else:
            alpha = np.full(6, sabine_absorption(self.dims, self.t60))
        return np.sqrt(1.0 - alpha)

    def default_length(self) -> float:
        if self.rir_length is not None:
            return float(self.rir_length)
        diag = float(np.linalg.norm(self.dims))
        return max(self.t60, 0.0) + diag / self.speed_of_sound + 0.01

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.array(self.dims)))


def _fd_kernel(frac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Taps and integer offsets of the windowed-sinc kernel for fractional delays."""
    half = FD_TAPS // 2
    offsets = np.arange(-half + 1, half + 1)  # -3..4 around floor(delay)
    t = offsets[None, :] - frac[:, None]
    win = 0.5 + 0.5 * np.cos(np.pi * t / half)  # Hann over +-half samples
    win[np.abs(t) >= half] = 0.0
    h = np.sinc(t) * win
    h /= h.sum(axis=1, keepdims=True)
    return h, offsets


def _image_sources(room: RoomSpec, src: np.ndarray, max_dist: float):
    L = np.array(room.dims)
    beta = room.wall_reflection()
    if room.anechoic:
        bounds = np.zeros(3, dtype=int)
    else:
        bounds = np.ceil(max_dist / (2.0 * L)).astype(int) + 1
    axes_pos = []
    axes_amp = []
    axes_order = []
    for ax in range(3):
        n = np.arange(-bounds[ax], bounds[ax] + 1)
        pos, amp, order = [], [], []
        for q in (0, 1):
            # image coordinate (1 - 2q) * s + 2 n L; reflections |n - q| off wall 1, |n| off wall 2
            pos.append((1 - 2 * q) * src[ax] + 2 * n * L[ax])
            r1 = np.abs(n - q)
            r2 = np.abs(n)
            amp.append(beta[2 * ax] ** r1 * beta[2 * ax + 1] ** r2)
            order.append(r1 + r2)
        axes_pos.append(np.concatenate(pos))
        axes_amp.append(np.concatenate(amp))
        axes_order.append(np.concatenate(order))
    return axes_pos, axes_amp, axes_order


def image_rirs(room: RoomSpec, src, mics, sample_rate: int = 16000, length: float | None = None) -> np.ndarray:
    """Impulse responses from one source to several microphones; ``(mics, taps)``."""
    src = np.asarray(src, dtype=float)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    if not room.contains(src):
        raise InvalidGeometryError(f"source {src.tolist()} is outside the room")
    for m in mics:
        if not room.contains(m):
            raise InvalidGeometryError(f"microphone {m.tolist()} is outside the room")
        if np.linalg.norm(m - src) < 1e-6:
            raise InvalidGeometryError("source and microphone coincide")
    c = room.speed_of_sound
    length = room.default_length() if length is None else length
    n_taps = int(np.ceil(length * sample_rate)) + FD_TAPS
    max_dist = length * c
    ax_pos, ax_amp, ax_ord = _image_sources(room, src, max_dist)
    out = np.zeros((len(mics), n_taps))
    for i, mic in enumerate(mics):
        dx2 = (ax_pos[0] - mic[0]) ** 2
        dy2 = (ax_pos[1] - mic[1]) ** 2
        dz2 = (ax_pos[2] - mic[2]) ** 2
        dist = np.sqrt(dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :])
        amp = ax_amp[0][:, None, None] * ax_amp[1][None, :, None] * ax_amp[2][None, None, :]
        keep = dist <= max_dist
        if room.max_image_order >= 0:
            order = ax_ord[0][:, None, None] + ax_ord[1][None, :, None] + ax_ord[2][None, None, :]
            keep &= order <= room.max_image_order
        d = dist[keep]
        a = amp[keep] / (4.0 * np.pi * d)
        delay = d * sample_rate / c
        base = np.floor(delay).astype(int)
        taps, offsets = _fd_kernel(delay - base)
        idx = base[:, None] + offsets[None, :]
        ok = (idx >= 0) & (idx < n_taps)
        out[i] = np.bincount(idx[ok], weights=(taps * a[:, None])[ok], minlength=n_taps)[:n_taps]
    return out


def image_rir(room: RoomSpec, src, mic, sample_rate: int = 16000, length: float | None = None) -> np.ndarray:
    return image_rirs(room, src, np.asarray(mic, dtype=float)[None, :], sample_rate, length)[0]


def direct_path_delay(src, mic, sample_rate: int = 16000, c: float = SPEED_OF_SOUND) -> float:
    return float(np.linalg.norm(np.asarray(src, float) - np.asarray(mic, float)) * sample_rate / c)


def schroeder_decay(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at the start)."""
    e = np.cumsum(rir[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def estimate_t60(rir: np.ndarray, sample_rate: int = 16000, start_db: float = -5.0,
                 stop_db: float = -35.0) -> float:
    """T60 from a line fit to the Schroeder curve between ``start_db`` and ``stop_db``."""
    edc = schroeder_decay(rir)
    idx = np.flatnonzero((edc <= start_db) & (edc >= stop_db))
    if len(idx) < 2:
        return 0.0
    t = idx / sample_rate
    slope, _ = np.polyfit(t, edc[idx], 1)
    if slope >= 0:
        return float("inf")
    return float(-60.0 / slope)
