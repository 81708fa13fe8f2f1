"""Geometry, transfer functions and steering vectors of the hearing-aid scene.

Azimuths are measured in the horizontal plane of the listener's head,
counter-clockwise from the look direction, so 90 degrees is on the left.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import StftConfig, read_wav

__all__ = [
    "DegenerateReferenceError",
    "UnavailableAngleError",
    "SceneGeometry",
    "TransferFunctionSet",
    "SteeringVector",
    "HypothesisSet",
    "default_ha_offsets",
    "ratf_from_atf",
    "perturb_steering",
    "load_ir_set",
    "write_ir_set",
]

REFERENCE_FLOOR = 1e-12


class DegenerateReferenceError(ValueError):
    pass


class UnavailableAngleError(KeyError):
    pass


def default_ha_offsets(lateral: float = 0.09, spacing: float = 0.01) -> np.ndarray:
    """Bilateral 4-mic layout in the head frame (x forward, y left, z up).

    Channel order: left-front, left-rear, right-front, right-rear.
    """
    h = spacing / 2.0
    return np.array(
        [
            [h, lateral, 0.0],
            [-h, lateral, 0.0],
            [h, -lateral, 0.0],
            [-h, -lateral, 0.0],
        ]
    )


def _rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class SceneGeometry:
    room_dims: np.ndarray
    ha_user_position: np.ndarray
    ha_mic_offsets: np.ndarray = field(default_factory=default_ha_offsets)
    # (azimuth_deg, radius_m, height_m) relative to the head centre
    talker_positions: list = field(default_factory=list)
    rm_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    ha_yaw_deg: float = 0.0

    def __post_init__(self):
        self.room_dims = np.asarray(self.room_dims, dtype=float)
        self.ha_user_position = np.asarray(self.ha_user_position, dtype=float)
        self.ha_mic_offsets = np.atleast_2d(np.asarray(self.ha_mic_offsets, dtype=float))
        self.rm_positions = np.asarray(self.rm_positions, dtype=float).reshape(-1, 3)
        self.talker_positions = [tuple(float(v) for v in p) for p in self.talker_positions]
        self.validate()

    def validate(self):
        if self.room_dims.shape != (3,) or np.any(self.room_dims <= 0):
            raise ValueError("room_dims must be three positive lengths")
        if self.ha_mic_offsets.shape[0] < 2:
            raise ValueError("at least two hearing-aid microphones are required")
        az = [round(p[0] % 360.0, 9) for p in self.talker_positions]
        if len(set(az)) != len(az):
            raise ValueError("talker azimuths must be unique")
        for name, pts in (
            ("hearing-aid microphone", self.ha_mic_positions()),
            ("talker", self.talker_xyz()),
            ("remote microphone", self.rm_positions),
        ):
            for p in pts:
                if np.any(p <= 0) or np.any(p >= self.room_dims):
                    raise ValueError(f"{name} at {np.round(p, 3).tolist()} lies outside the room")

    @property
    def num_mics(self) -> int:
        return self.ha_mic_offsets.shape[0]

    def ha_mic_positions(self) -> np.ndarray:
        return self.ha_user_position + self.ha_mic_offsets @ _rot_z(self.ha_yaw_deg).T

    def direction(self, azimuth_deg: float) -> np.ndarray:
        """World-frame unit vector for a head-relative azimuth."""
        a = np.deg2rad(azimuth_deg + self.ha_yaw_deg)
        return np.array([np.cos(a), np.sin(a), 0.0])

    def point_at(self, azimuth_deg: float, radius: float, height: float) -> np.ndarray:
        p = self.ha_user_position + radius * self.direction(azimuth_deg)
        p[2] = height
        return p

    def talker_xyz(self) -> np.ndarray:
        if not self.talker_positions:
            return np.zeros((0, 3))
        return np.array([self.point_at(*p) for p in self.talker_positions])


@dataclass
class TransferFunctionSet:
    """ATFs ``atf[source, mic, bin]`` and the impulse responses they come from.

    Impulse responses longer than ``fft_size`` are truncated by the FFT, which
    is the multiplicative-transfer-function approximation the STFT relies on.
    """

    atf: np.ndarray
    impulse_responses: np.ndarray
    fft_size: int
    azimuths: np.ndarray | None = None

    def __post_init__(self):
        self.atf = np.asarray(self.atf)
        if self.atf.ndim != 3:
            raise ValueError("ATFs must be indexed (source, mic, bin)")
        if self.azimuths is not None:
            self.azimuths = np.asarray(self.azimuths, dtype=float)
            if self.azimuths.shape != (self.atf.shape[0],):
                raise ValueError("need one azimuth per source")

    @classmethod
    def from_impulse_responses(cls, irs, fft_size: int, azimuths=None) -> "TransferFunctionSet":
        irs = np.asarray(irs, dtype=float)
        if irs.ndim != 3:
            raise ValueError("impulse responses must be indexed (source, mic, tap)")
        atf = np.fft.rfft(irs[..., :fft_size], n=fft_size, axis=-1)
        az = None if azimuths is None else np.asarray(azimuths, dtype=float)
        return cls(atf=atf, impulse_responses=irs, fft_size=fft_size, azimuths=az)

    @property
    def num_sources(self) -> int:
        return self.atf.shape[0]

    @property
    def num_mics(self) -> int:
        return self.atf.shape[1]

    def index_of_azimuth(self, azimuth_deg: float, tol: float = 1e-6) -> int:
        if self.azimuths is None:
            raise UnavailableAngleError("transfer set carries no azimuth labels")
        diff = np.abs((self.azimuths - azimuth_deg + 180.0) % 360.0 - 180.0)
        i = int(np.argmin(diff))
        if diff[i] > tol:
            raise UnavailableAngleError(f"no transfer function at {azimuth_deg} deg")
        return i

    def nearest_azimuth(self, azimuth_deg: float) -> int:
        if self.azimuths is None or len(self.azimuths) == 0:
            raise UnavailableAngleError("transfer set carries no azimuth labels")
        diff = np.abs((self.azimuths - azimuth_deg + 180.0) % 360.0 - 180.0)
        return int(np.argmin(diff))


@dataclass(frozen=True)
class SteeringVector:
    d: np.ndarray  # (mic, bin)
    reference_mic: int = 0
    azimuth_deg: float | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=complex)
        if d.ndim != 2:
            raise ValueError("steering vector must be indexed (mic, bin)")
        if not 0 <= self.reference_mic < d.shape[0]:
            raise ValueError("reference_mic out of range")
        if not np.all(d[self.reference_mic] == 1.0):
            raise ValueError("steering vector is not reference-normalised")
        object.__setattr__(self, "d", d)

    @property
    def num_mics(self) -> int:
        return self.d.shape[0]

    @property
    def num_bins(self) -> int:
        return self.d.shape[1]

    @classmethod
    def normalized(cls, d, reference_mic: int = 0, azimuth_deg=None) -> "SteeringVector":
        d = np.array(d, dtype=complex)
        ref = d[reference_mic].copy()
        mag = np.abs(ref)
        scale = float(np.abs(d).max(initial=0.0))
        bad = np.flatnonzero(mag <= REFERENCE_FLOOR * scale)
        if bad.size:
            raise DegenerateReferenceError(
                f"reference microphone {reference_mic} has vanishing response at bin {int(bad[0])}"
            )
        d = d / ref
        d[reference_mic] = 1.0
        return cls(d, reference_mic, azimuth_deg)

    def save(self, path) -> Path:
        path = Path(path)
        az = np.nan if self.azimuth_deg is None else self.azimuth_deg
        np.savez(path, d=self.d, reference_mic=self.reference_mic, azimuth_deg=az)
        return path

    @classmethod
    def load(cls, path) -> "SteeringVector":
        with np.load(path) as z:
            az = float(z["azimuth_deg"])
            return cls(z["d"], int(z["reference_mic"]), None if np.isnan(az) else az)


@dataclass(frozen=True)
class HypothesisSet:
    channel_ids: tuple
    steering: SteeringVector

    def __post_init__(self):
        ids = tuple(self.channel_ids)
        if len(ids) < 1:
            raise ValueError("at least one remote channel is required")
        if len(set(ids)) != len(ids):
            raise ValueError("remote channel ids must be unique")
        object.__setattr__(self, "channel_ids", ids)

    @property
    def num_channels(self) -> int:
        return len(self.channel_ids)


def ratf_from_atf(atfs: TransferFunctionSet, source: int, reference_mic: int = 0) -> SteeringVector:
    """Relative transfer function of ``source`` w.r.t. ``reference_mic``."""
    az = None
    if atfs.azimuths is not None:
        az = float(atfs.azimuths[source])
    return SteeringVector.normalized(atfs.atf[source], reference_mic, az)


def perturb_steering(
    d: SteeringVector,
    substitute: SteeringVector | None = None,
    rotate: float | None = None,
    transfer: TransferFunctionSet | None = None,
    jitter: float | None = None,
    seed: int = 0,
) -> SteeringVector:
    """Steering vector the selector will use in place of the true frontal RATF.

    Exactly one of ``substitute``, ``rotate`` (degrees, needs ``transfer``) or
    ``jitter`` (log-magnitude / phase standard deviation) must be given.
    """
    given = [x is not None for x in (substitute, rotate, jitter)]
    if sum(given) != 1:
        raise ValueError("choose exactly one perturbation mode")
    if substitute is not None:
        if substitute.d.shape != d.d.shape or substitute.reference_mic != d.reference_mic:
            raise ValueError("substitute steering vector has a different shape or reference")
        return substitute
    if rotate is not None:
        if transfer is None or transfer.azimuths is None:
            raise UnavailableAngleError("rotation needs a transfer set with azimuths")
        base = d.azimuth_deg or 0.0
        target = (base + rotate) % 360.0
        i = transfer.nearest_azimuth(target)
        gap = abs((transfer.azimuths[i] - target + 180.0) % 360.0 - 180.0)
        az = np.sort(np.asarray(transfer.azimuths, float) % 360.0)
        gaps = np.diff(np.concatenate([az, az[:1] + 360.0]))
        spacing = float(gaps.min()) if len(az) > 1 else 0.0
        if gap > spacing / 2.0 + 1e-9:
            raise UnavailableAngleError(f"no transfer function near {target} deg")
        out = ratf_from_atf(transfer, i, d.reference_mic)
        if out.num_bins != d.num_bins:
            raise ValueError("transfer set bin count differs from the steering vector")
        return out
    rng = np.random.default_rng(seed)
    shape = d.d.shape
    factor = np.exp(jitter * rng.standard_normal(shape) + 1j * jitter * rng.standard_normal(shape))
    out = d.d * factor
    out[d.reference_mic] = 1.0
    return SteeringVector(out, d.reference_mic, d.azimuth_deg)


IR_MANIFEST = "manifest.csv"
IR_FIELDS = ("source_id", "mic_id", "wav_path", "distance_m", "azimuth_deg")


def load_ir_set(directory, cfg: StftConfig = StftConfig()) -> TransferFunctionSet:
    """Import measured impulse responses listed in ``<directory>/manifest.csv``."""
    directory = Path(directory)
    with open(directory / IR_MANIFEST, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{directory / IR_MANIFEST} lists no impulse responses")
    missing = set(IR_FIELDS) - set(rows[0])
    if missing:
        raise ValueError(f"IR manifest lacks columns {sorted(missing)}")
    sources = sorted({int(r["source_id"]) for r in rows})
    mics = sorted({int(r["mic_id"]) for r in rows})
    table = {}
    azimuth = {}
    for r in rows:
        x, _ = read_wav(directory / r["wav_path"], cfg)
        table[int(r["source_id"]), int(r["mic_id"])] = x[0]
        azimuth[int(r["source_id"])] = float(r["azimuth_deg"])
    n_taps = max(len(v) for v in table.values())
    irs = np.zeros((len(sources), len(mics), n_taps))
    for (s, m), ir in table.items():
        irs[sources.index(s), mics.index(m), : len(ir)] = ir
    missing_pairs = [(s, m) for s in sources for m in mics if (s, m) not in table]
    if missing_pairs:
        raise ValueError(f"IR manifest is missing (source, mic) pairs {missing_pairs[:4]}")
    return TransferFunctionSet.from_impulse_responses(
        irs, cfg.fft_size, [azimuth[s] for s in sources]
    )


def write_ir_set(directory, tfs: TransferFunctionSet, sample_rate: int, distances=None) -> Path:
    from .dsp import write_wav

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in range(tfs.num_sources):
        for m in range(tfs.num_mics):
            name = f"ir_s{s:02d}_m{m:02d}.wav"
            write_wav(directory / name, tfs.impulse_responses[s, m], sample_rate)
            rows.append(
                {
                    "source_id": s,
                    "mic_id": m,
                    "wav_path": name,
                    "distance_m": "" if distances is None else f"{distances[s][m]:.6f}",
                    "azimuth_deg": "" if tfs.azimuths is None else repr(float(tfs.azimuths[s])),
                }
            )
    with open(directory / IR_MANIFEST, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=IR_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return directory / IR_MANIFEST

