"""Maximum-likelihood remote-channel selection over a sliding window of frames.

For each remote channel ``r`` and bin ``k`` the state keeps exact sliding sums
over the last ``D`` frames::

    S_cross[r, k] = sum_j conj(Y_r(j, k)) * Y_bf(j, k) / s2(j, k)
    S_rr[r, k]    = sum_j |Y_r(j, k)|^2 / s2(j, k)
    S_bb[k]       = sum_j |Y_bf(j, k)|^2 / s2(j, k)

and the concentrated log-likelihood of channel ``r`` is
``sum_k |S_cross[r, k]|^2 / S_rr[r, k]``, the maximum over the unknown complex
scale ``A[r, k] = S_cross[r, k] / S_rr[r, k]``.

Three weighting modes fix the per-frame noise PSD ``s2``:

``framewise``
    the caller supplies ``s2`` per frame (general form).
``approximation``
    the noise PSD is replaced by the window's noisy output PSD
    ``S_bb / D``; every bin then carries weight one and the score is ``D``
    times the summed squared correlation coefficients.
``oracle``
    the noise PSD is the window mean of the beamformed isolated noise; bins
    are weighted by the posterior SNR.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import StftConfig

__all__ = [
    "WEIGHTING_MODES",
    "FULL_INTEGRATION_TIMES",
    "InvalidPsdError",
    "UndefinedScaleError",
    "SelectorConfig",
    "SelectorState",
    "Selection",
    "SelectionTrace",
    "default_bin_mask",
    "run_selector",
    "write_decision_log",
]

WEIGHTING_MODES = ("approximation", "oracle", "framewise")
FULL_INTEGRATION_TIMES = (0.5, 1.0, 2.0, 5.0, 15.0)


class InvalidPsdError(ValueError):
    pass


class UndefinedScaleError(ZeroDivisionError):
    pass


def default_bin_mask(num_bins: int) -> np.ndarray:
    """All bins except DC and Nyquist."""
    mask = np.ones(num_bins, dtype=bool)
    mask[0] = mask[-1] = False
    return mask


@dataclass
class SelectorConfig:
    integration_time: float = 2.0
    stft: StftConfig = field(default_factory=StftConfig)
    bin_mask: np.ndarray | None = None
    weighting_mode: str = "approximation"

    def __post_init__(self):
        if self.integration_time <= 0:
            raise ValueError("integration time must be positive")
        if self.weighting_mode not in WEIGHTING_MODES:
            raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")
        if self.bin_mask is None:
            self.bin_mask = default_bin_mask(self.stft.num_bins)
        mask = np.asarray(self.bin_mask)
        if mask.dtype != bool:
            full = np.zeros(self.stft.num_bins, dtype=bool)
            full[mask.astype(int)] = True
            mask = full
        if mask.shape != (self.stft.num_bins,) or not mask.any():
            raise ValueError("bin_mask must select at least one of the STFT bins")
        self.bin_mask = mask

    @property
    def window_frames(self) -> int:
        return self.stft.frames_for(self.integration_time)


@dataclass
class Selection:
    channel: int
    channel_id: object
    scores: np.ndarray  # (R,)
    rho2: np.ndarray  # (R, K) squared correlation coefficients, masked bins only
    posterior_snr: np.ndarray  # (K,)


class SelectorState:
    """Sliding-window sufficient statistics for one audio stream."""

    def __init__(self, num_channels: int, num_bins: int, window: int,
                 bin_mask: np.ndarray | None = None, weighting_mode: str = "approximation",
                 channel_ids=None):
        if num_channels < 1:
            raise ValueError("need at least one remote channel")
        if window < 1:
            raise ValueError("window must hold at least one frame")
        if weighting_mode not in WEIGHTING_MODES:
            raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")
        self.num_channels = num_channels
        self.num_bins = num_bins
        self.window = window
        self.mask = default_bin_mask(num_bins) if bin_mask is None else np.asarray(bin_mask, bool)
        if self.mask.shape != (num_bins,) or not self.mask.any():
            raise ValueError("bin_mask must select at least one bin")
        self.weighting_mode = weighting_mode
        self.channel_ids = tuple(range(num_channels)) if channel_ids is None else tuple(channel_ids)
        if len(self.channel_ids) != num_channels:
            raise ValueError("channel_ids length differs from num_channels")

        R, K, D = num_channels, num_bins, window
        self._cross = np.zeros((D, R, K), dtype=complex)
        self._rr = np.zeros((D, R, K))
        self._bb = np.zeros((D, K))
        self._vv = np.zeros((D, K))
        self.s_cross = np.zeros((R, K), dtype=complex)
        self.s_rr = np.zeros((R, K))
        self.s_bb = np.zeros(K)
        self.s_vv = np.zeros(K)
        self.pushed = 0
        self._has_noise = False

    @classmethod
    def from_config(cls, cfg: SelectorConfig, num_channels: int, channel_ids=None):
        return cls(num_channels, cfg.stft.num_bins, cfg.window_frames, cfg.bin_mask,
                   cfg.weighting_mode, channel_ids)

    @property
    def frames_in_window(self) -> int:
        return min(self.pushed, self.window)

    @property
    def full(self) -> bool:
        return self.pushed >= self.window

    def push_frame(self, y_bf, remotes, sigma2=None, noise_bf=None) -> "SelectorState":
        """Add one frame, evicting the frame that leaves the window.

        ``y_bf`` is (K,), ``remotes`` is (R, K), ``sigma2`` (K,) per-frame PSD
        weights (default ones), ``noise_bf`` (K,) beamformed isolated noise
        used by the oracle weighting.
        """
        y_bf = np.asarray(y_bf)
        remotes = np.asarray(remotes)
        if y_bf.shape != (self.num_bins,) or remotes.shape != (self.num_channels, self.num_bins):
            raise ValueError(
                f"expected y_bf ({self.num_bins},) and remotes ({self.num_channels}, "
                f"{self.num_bins}); got {y_bf.shape} and {remotes.shape}"
            )
        if sigma2 is None:
            inv = np.ones(self.num_bins)
        else:
            sigma2 = np.asarray(sigma2, dtype=float)
            if sigma2.shape != (self.num_bins,):
                raise ValueError("sigma2 must hold one value per bin")
            if np.any(~(sigma2[self.mask] > 0)):
                k = int(np.flatnonzero(self.mask & ~(sigma2 > 0))[0])
                raise InvalidPsdError(f"non-positive PSD {sigma2[k]} at masked bin {k}")
            inv = np.zeros(self.num_bins)
            np.divide(1.0, sigma2, out=inv, where=sigma2 > 0)

        slot = self.pushed % self.window
        cross = np.conj(remotes) * y_bf * inv
        rr = (remotes.real ** 2 + remotes.imag ** 2) * inv
        bb = (y_bf.real ** 2 + y_bf.imag ** 2) * inv
        if noise_bf is not None:
            noise_bf = np.asarray(noise_bf)
            vv = (noise_bf.real ** 2 + noise_bf.imag ** 2) * inv
            self._has_noise = True
        else:
            vv = np.zeros(self.num_bins)

        self.s_cross += cross - self._cross[slot]
        self.s_rr += rr - self._rr[slot]
        self.s_bb += bb - self._bb[slot]
        self.s_vv += vv - self._vv[slot]
        self._cross[slot] = cross
        self._rr[slot] = rr
        self._bb[slot] = bb
        self._vv[slot] = vv
        self.pushed += 1
        if self.pushed % self.window == 0:
            # re-sum from the ring buffer so add/evict rounding cannot accumulate
            self.s_cross = self._cross.sum(axis=0)
            self.s_rr = self._rr.sum(axis=0)
            self.s_bb = self._bb.sum(axis=0)
            self.s_vv = self._vv.sum(axis=0)
        # eviction can leave tiny negative residue on the real sums
        np.maximum(self.s_rr, 0.0, out=self.s_rr)
        np.maximum(self.s_bb, 0.0, out=self.s_bb)
        np.maximum(self.s_vv, 0.0, out=self.s_vv)
        return self

    def window_contributions(self):
        """Per-frame contributions currently in the window, oldest first."""
        n = self.frames_in_window
        order = [(self.pushed - n + i) % self.window for i in range(n)]
        return self._cross[order], self._rr[order], self._bb[order], self._vv[order]

    def bin_weights(self) -> np.ndarray:
        """Per-bin factor applied to ``|S_cross|^2 / S_rr`` for the active mode."""
        w = np.zeros(self.num_bins)
        if self.weighting_mode == "framewise":
            w[:] = 1.0
        else:
            denom = self.s_bb if self.weighting_mode == "approximation" else self.s_vv
            if self.weighting_mode == "oracle" and not self._has_noise:
                raise InvalidPsdError("oracle weighting needs beamformed noise frames")
            np.divide(self.frames_in_window, denom, out=w, where=denom > 0)
        w[~self.mask] = 0.0
        return w

    def _per_bin_scores(self) -> np.ndarray:
        num = self.s_cross.real ** 2 + self.s_cross.imag ** 2
        out = np.zeros_like(self.s_rr)
        np.divide(num, self.s_rr, out=out, where=self.s_rr > 0)
        return out * self.bin_weights()

    def scores(self) -> np.ndarray:
        return self._per_bin_scores().sum(axis=1)

    def channel_score(self, r: int) -> float:
        return float(self.scores()[r])

    def estimate_scale(self, r: int, k: int) -> complex:
        """ML estimate of the scale relating channel ``r`` to the beamformer at bin ``k``."""
        if not self.s_rr[r, k] > 0:
            raise UndefinedScaleError(f"channel {r} has no energy at bin {k} in the window")
        return complex(self.s_cross[r, k] / self.s_rr[r, k])

    def correlation(self) -> np.ndarray:
        """Squared absolute correlation coefficient per (channel, bin); 0 where undefined."""
        num = self.s_cross.real ** 2 + self.s_cross.imag ** 2
        den = self.s_rr * self.s_bb[None, :]
        out = np.zeros_like(den)
        np.divide(num, den, out=out, where=den > 0)
        out[:, ~self.mask] = 0.0
        return out

    def posterior_snr(self) -> np.ndarray:
        """Noisy-to-noise output PSD ratio; identically one in approximation mode."""
        g = np.zeros(self.num_bins)
        if self.weighting_mode == "oracle":
            np.divide(self.s_bb, self.s_vv, out=g, where=self.s_vv > 0)
        else:
            g[:] = 1.0
        g[~self.mask] = 0.0
        return g

    def select(self) -> Selection:
        """Channel with the largest score; ties go to the lowest index."""
        s = self.scores()
        r = int(np.argmax(s))  # first maximum
        return Selection(r, self.channel_ids[r], s, self.correlation(), self.posterior_snr())


@dataclass
class SelectionTrace:
    decisions: np.ndarray  # (L,) channel index, -1 where not yet valid
    scores: np.ndarray  # (L, R)
    valid: np.ndarray  # (L,) bool
    rho2_min: np.ndarray  # (L,)
    rho2_max: np.ndarray  # (L,)
    window: int
    first_valid: int

    @property
    def valid_decisions(self) -> np.ndarray:
        return self.decisions[self.valid]

    @property
    def excluded_frames(self) -> int:
        return int((~self.valid).sum())


def run_selector(y_bf: np.ndarray, remotes: np.ndarray, cfg: SelectorConfig,
                 warmup: int = 0, noise_bf: np.ndarray | None = None,
                 sigma2: np.ndarray | None = None, channel_ids=None) -> SelectionTrace:
    """Stream ``(L, K)`` beamformer output and ``(L, K, R)`` remote spectra.

    A decision is valid once the whole window lies after the first ``warmup``
    frames.
    """
    L, K = y_bf.shape
    R = remotes.shape[2]
    if remotes.shape[:2] != (L, K):
        raise ValueError("remote block does not match beamformer output")
    if cfg.weighting_mode == "oracle" and noise_bf is None:
        raise InvalidPsdError("oracle weighting needs the beamformed isolated noise")
    state = SelectorState.from_config(cfg, R, channel_ids)
    D = state.window
    first_valid = warmup + D - 1
    decisions = np.full(L, -1, dtype=int)
    scores = np.zeros((L, R))
    rho_min = np.full(L, np.nan)
    rho_max = np.full(L, np.nan)
    rem = np.ascontiguousarray(remotes.transpose(0, 2, 1))
    for l in range(L):
        state.push_frame(
            y_bf[l], rem[l],
            None if sigma2 is None else sigma2[l],
            None if noise_bf is None else noise_bf[l],
        )
        if l >= first_valid:
            sel = state.select()
            decisions[l] = sel.channel
            scores[l] = sel.scores
            rho = sel.rho2[:, state.mask]
            rho_min[l] = rho.min()
            rho_max[l] = rho.max()
    valid = np.arange(L) >= first_valid
    return SelectionTrace(decisions, scores, valid, rho_min, rho_max, D, first_valid)


def write_decision_log(path, trace: SelectionTrace, hop: int, sample_rate: int,
                       channel_ids=None) -> Path:
    """CSV rows ``frame_index, time_s, selected_channel, score_1..score_R`` (valid frames)."""
    path = Path(path)
    R = trace.scores.shape[1]
    ids = list(range(R)) if channel_ids is None else list(channel_ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "time_s", "selected_channel"] + [f"score_{i + 1}" for i in range(R)])
        for l in np.flatnonzero(trace.valid):
            w.writerow([int(l), repr(float(l * hop / sample_rate)), ids[trace.decisions[l]]]
                       + [repr(float(s)) for s in trace.scores[l]])
    return path
