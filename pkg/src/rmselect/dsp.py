"""Time-frequency front end: square-root Hann STFT, overlap-add synthesis, WAV I/O.

Blocks are stored as ``data[frame, bin, channel]``. Frame ``l`` covers samples
``[l * hop, l * hop + frame_len)``; no pre-padding is applied, so the first and
last frames only partially overlap their neighbours and are flagged as edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "StftConfig",
    "StftFrameBlock",
    "make_window",
    "stft_analyze",
    "stft_synthesize",
    "read_wav",
    "write_wav",
    "WavError",
]


class WavError(ValueError):
    """Raised when a WAV file cannot be decoded or does not match the config."""


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    frame_len: int = 512
    hop: int = 256
    fft_size: int = 512
    window_kind: str = "sqrt_hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.frame_len < 2 or self.frame_len % 2:
            raise ValueError(f"frame_len must be even and >= 2, got {self.frame_len}")
        if self.hop * 2 != self.frame_len:
            raise ValueError("hop must be frame_len / 2 (50% overlap)")
        if self.fft_size < self.frame_len:
            raise ValueError("fft_size must be >= frame_len")
        if self.fft_size % 2:
            raise ValueError("fft_size must be even")
        if self.window_kind != "sqrt_hann":
            raise ValueError(f"unsupported window kind {self.window_kind!r}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def frames_for(self, seconds: float) -> int:
        """Number of hops spanning ``seconds`` (at least one)."""
        return max(1, int(round(seconds * self.sample_rate / self.hop)))

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_len:
            return 0
        return 1 + (num_samples - self.frame_len) // self.hop

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size


@dataclass
class StftFrameBlock:
    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("block data must be indexed (frame, bin, channel)")
        if self.data.shape[1] != self.config.num_bins:
            raise ValueError(
                f"block has {self.data.shape[1]} bins, config implies {self.config.num_bins}"
            )

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[2]

    @property
    def edge_frames(self) -> np.ndarray:
        """Boolean mask of frames without a full overlap partner on both sides."""
        mask = np.zeros(self.num_frames, dtype=bool)
        if self.num_frames:
            mask[0] = mask[-1] = True
        return mask

    def channel(self, m: int) -> np.ndarray:
        return self.data[:, :, m]


def make_window(length: int, kind: str = "sqrt_hann") -> np.ndarray:
    """Periodic Hann window raised to the power 0.5.

    With a hop of ``length / 2`` the squared window sums to exactly one, so
    the same window serves analysis and synthesis.
    """
    if kind != "sqrt_hann":
        raise ValueError(f"unsupported window kind {kind!r}")
    if length < 2 or length % 2:
        raise ValueError(f"window length must be even and >= 2, got {length}")
    n = np.arange(length)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)
    return np.sqrt(np.clip(hann, 0.0, None))


def _as_channels(signal: np.ndarray) -> np.ndarray:
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        return x[None, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or (channels, samples)")
    return x


def stft_analyze(signal: np.ndarray, cfg: StftConfig = StftConfig()) -> StftFrameBlock:
    """Forward STFT of a ``(channels, samples)`` (or 1-D) real signal."""
    x = _as_channels(signal)
    n = x.shape[1]
    if n < cfg.frame_len:
        raise ValueError(f"signal has {n} samples, shorter than one frame ({cfg.frame_len})")
    n_frames = cfg.num_frames(n)
    win = make_window(cfg.frame_len, cfg.window_kind)
    # (channels, frames, frame_len) view without copying
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len, axis=1)[:, :: cfg.hop]
    frames = frames[:, :n_frames] * win
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return StftFrameBlock(np.ascontiguousarray(spec.transpose(1, 2, 0)), cfg)


def stft_synthesize(block: StftFrameBlock) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft_analyze`.

    Returns ``(channels, samples)`` with ``(frames - 1) * hop + frame_len``
    samples. Reconstruction is exact away from the first and last hop.
    """
    cfg = block.config
    if block.num_bins != cfg.num_bins:
        raise ValueError("block bin count inconsistent with its config")
    win = make_window(cfg.frame_len, cfg.window_kind)
    n_frames, _, n_ch = block.data.shape
    out_len = (n_frames - 1) * cfg.hop + cfg.frame_len if n_frames else 0
    out = np.zeros((n_ch, out_len))
    if n_frames == 0:
        return out
    seg = np.fft.irfft(block.data.transpose(2, 0, 1), n=cfg.fft_size, axis=-1)
    seg = seg[..., : cfg.frame_len] * win
    # two interleaved streams of non-overlapping frames
    for phase in (0, 1):
        part = seg[:, phase::2]
        if part.shape[1] == 0:
            continue
        flat = part.reshape(n_ch, -1)
        start = phase * cfg.hop
        out[:, start : start + flat.shape[1]] += flat
    return out


def read_wav(path, cfg: StftConfig | None = None) -> tuple[np.ndarray, int]:
    """Read a WAV as float ``(channels, samples)``; PCM16 scaled to [-1, 1)."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, EOFError, OSError) as exc:
        raise WavError(f"cannot decode {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype.kind == "f":
        x = data.astype(float)
    else:
        raise WavError(f"unsupported sample format {data.dtype} in {path}")
    x = x[None, :] if x.ndim == 1 else x.T
    if cfg is not None and rate != cfg.sample_rate:
        raise WavError(f"{path}: sample rate {rate} Hz does not match config {cfg.sample_rate} Hz")
    return np.ascontiguousarray(x), rate


def write_wav(path, signal: np.ndarray, sample_rate: int, fmt: str = "float32") -> Path:
    x = _as_channels(signal)
    if fmt == "float32":
        data = x.T.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(x.T * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    path = Path(path)
    wavfile.write(str(path), int(sample_rate), data)
    return path
