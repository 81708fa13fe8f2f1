"""Isotropic speech-shaped noise fields and SNR calibration."""

from __future__ import annotations

import numpy as np
from scipy.signal import oaconvolve

from .stimuli import synth_ssn

__all__ = ["ZeroEnergyError", "isotropic_noise", "calibrate_snr", "snr_db", "spherical_coherence",
           "cylindrical_coherence", "msc"]


class ZeroEnergyError(ValueError):
    pass


def isotropic_noise(impulse_responses, num_samples: int, seed, template=None, corpus=None,
                    fs: int = 16000) -> np.ndarray:
    """Independent SSN per source direction, convolved with its IRs and summed per mic.

    ``impulse_responses`` is ``(source, mic, tap)``. Returns ``(mic, num_samples)``.
    """
    irs = np.asarray(impulse_responses, dtype=float)
    if irs.ndim != 3 or irs.shape[0] == 0 or irs.shape[1] == 0:
        raise ValueError("impulse responses must be a non-empty (source, mic, tap) array")
    if not np.all(np.isfinite(irs)):
        raise ValueError("impulse responses contain missing (non-finite) entries")
    if template is None and corpus is None:
        template = (np.array([0.0, fs / 2.0]), np.ones(2))
    out = np.zeros((irs.shape[1], num_samples))
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(irs.shape[0])
    for i in range(irs.shape[0]):
        s = synth_ssn(template, corpus, duration=num_samples / fs, seed=seeds[i], fs=fs)[:num_samples]
        out += oaconvolve(s[None, :], irs[i], axes=-1)[:, :num_samples]
    return out


def calibrate_snr(target: np.ndarray, noise: np.ndarray, snr_db_target: float) -> float:
    """Gain ``g`` so that ``||target||^2 / ||g noise||^2`` equals the requested SNR."""
    es = float(np.sum(np.asarray(target, float) ** 2))
    en = float(np.sum(np.asarray(noise, float) ** 2))
    if es <= 0.0 or en <= 0.0:
        raise ZeroEnergyError("SNR calibration needs non-zero target and noise energy")
    return float(np.sqrt(es / (en * 10.0 ** (snr_db_target / 10.0))))


def snr_db(signal: np.ndarray, noise: np.ndarray, cap: float = 120.0) -> float:
    """Energy ratio in dB, capped at ``cap`` (a noise-free input reports the cap)."""
    es = float(np.sum(np.abs(np.asarray(signal)) ** 2))
    en = float(np.sum(np.abs(np.asarray(noise)) ** 2))
    if en == 0.0:
        return cap if es > 0 else 0.0
    if es == 0.0:
        return -cap
    return float(np.clip(10.0 * np.log10(es / en), -cap, cap))


def spherical_coherence(freqs, distance: float, c: float = 343.0) -> np.ndarray:
    """Magnitude-squared coherence of a spherically isotropic field, ``sinc^2(2 f d / c)``."""
    return np.sinc(2.0 * np.asarray(freqs) * distance / c) ** 2


def cylindrical_coherence(freqs, distance: float, c: float = 343.0) -> np.ndarray:
    """Magnitude-squared coherence of a horizontal (2-D) isotropic field, ``J0^2(2 pi f d / c)``."""
    from scipy.special import j0

    return j0(2.0 * np.pi * np.asarray(freqs) * distance / c) ** 2


def msc(x: np.ndarray, y: np.ndarray, fs: int = 16000, nperseg: int = 512):
    """Welch estimate of the magnitude-squared coherence; returns (freqs, msc)."""
    from scipy.signal import coherence

    return coherence(x, y, fs=fs, nperseg=nperseg)
