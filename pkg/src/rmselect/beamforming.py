"""Head-steered MPDR/MVDR weights, beamformer outputs and output PSDs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import (
    ALPHA_Y, DEFAULT_LOADING, INIT_SCALE, Cpsdm, hermitian_part, solve_hermitian, update_cpsdm,
)
from .dsp import StftFrameBlock

__all__ = [
    "NumericalDegeneracyError",
    "StemsUnavailableError",
    "BeamformerOutput",
    "mpdr_weights",
    "mvdr_weights",
    "beamform",
    "output_noisy_psd",
    "oracle_noise_psd",
    "run_mpdr",
    "fixed_mpdr",
    "dump_weights_csv",
]

DISTORTIONLESS_TOL = 1e-10


class NumericalDegeneracyError(ArithmeticError):
    pass


class StemsUnavailableError(RuntimeError):
    pass


def mpdr_weights(c_y: np.ndarray, d: np.ndarray, loading: float = DEFAULT_LOADING) -> np.ndarray:
    """``w = C^-1 d / (d^H C^-1 d)``, batched over leading axes.

    ``c_y`` is ``(..., M, M)`` and ``d`` is ``(..., M)``.
    """
    d = np.asarray(d, dtype=complex)
    if not np.all(np.any(d != 0, axis=-1)):
        raise NumericalDegeneracyError("steering vector is zero")
    x = solve_hermitian(c_y, np.broadcast_to(d, np.broadcast_shapes(d.shape, c_y.shape[:-1])),
                        loading)
    denom = np.einsum("...m,...m->...", np.conj(d), x)
    scale = np.einsum("...m,...m->...", np.conj(d), d).real
    bad = (denom.real <= 0) | (np.abs(denom.imag) > 1e-8 * np.abs(denom.real)) | (scale <= 0)
    if np.any(bad) or not np.all(np.isfinite(denom)):
        raise NumericalDegeneracyError("d^H C^-1 d is not a positive real number")
    # dividing by the complex denominator (not its real part) keeps w^H d = 1 to rounding
    return x / denom[..., None]


mvdr_weights = mpdr_weights  # same formula; the caller passes the noise CPSDM


def beamform(w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``w^H y`` over the last axis."""
    w = np.asarray(w)
    y = np.asarray(y)
    if w.shape[-1] != y.shape[-1]:
        raise ValueError(f"weight length {w.shape[-1]} != signal length {y.shape[-1]}")
    return np.einsum("...m,...m->...", np.conj(w), y)


def output_noisy_psd(y_bf: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean squared magnitude over the D frames along ``axis``."""
    y = np.asarray(y_bf)
    if y.size == 0 or y.shape[axis] == 0:
        raise ValueError("cannot estimate a PSD from an empty window")
    return np.mean(np.abs(y) ** 2, axis=axis)


def oracle_noise_psd(noise: np.ndarray | None, w: np.ndarray, window: int) -> np.ndarray:
    """Output noise PSD ``|w^H v|^2`` averaged over a trailing window of frames.

    ``noise`` is ``(L, K, M)`` isolated noise STFT, ``w`` is ``(L, K, M)``.
    Returns ``(L, K)``; entry ``l`` averages frames ``max(0, l-window+1)..l``,
    the same smoothing the noisy-PSD path applies.
    """
    if noise is None:
        raise StemsUnavailableError("oracle noise PSD needs isolated noise stems")
    v_bf = beamform(w, noise)
    return trailing_mean(np.abs(v_bf) ** 2, window)


def trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    if window < 1:
        raise ValueError("window must be >= 1")
    c = np.cumsum(x, axis=0)
    out = c.copy()
    out[window:] = c[window:] - c[:-window]
    counts = np.minimum(np.arange(1, x.shape[0] + 1), window)
    return out / counts.reshape((-1,) + (1,) * (x.ndim - 1))


@dataclass
class BeamformerOutput:
    y_bf: np.ndarray  # (L, K)
    weights: np.ndarray  # (L, K, M)
    noise_bf: np.ndarray | None = None  # (L, K) beamformed isolated noise, oracle only

    def noisy_psd(self, window: int) -> np.ndarray:
        return trailing_mean(np.abs(self.y_bf) ** 2, window)

    def noise_psd(self, window: int, approximate: bool = True) -> np.ndarray:
        if approximate:
            return self.noisy_psd(window)
        if self.noise_bf is None:
            raise StemsUnavailableError("oracle noise PSD needs isolated noise stems")
        return trailing_mean(np.abs(self.noise_bf) ** 2, window)


def run_mpdr(
    block: StftFrameBlock,
    d: np.ndarray,
    noise: StftFrameBlock | None = None,
    smoothing: float = ALPHA_Y,
    loading: float = DEFAULT_LOADING,
    init_scale: float = INIT_SCALE,
) -> BeamformerOutput:
    """Adaptive head-steered MPDR over a multichannel block.

    Weights are recomputed every frame from the recursive noisy CPSDM that
    already includes that frame. ``d`` is ``(M, K)``.
    """
    L, K, M = block.data.shape
    d = np.asarray(d)
    if d.shape != (M, K):
        raise ValueError(f"steering shape {d.shape} does not match block ({M}, {K})")
    d_k = np.ascontiguousarray(d.T)
    state = Cpsdm.initial(K, M, smoothing, init_scale)
    weights = np.empty((L, K, M), dtype=complex)
    for l in range(L):
        state = update_cpsdm(state, block.data[l])
        weights[l] = mpdr_weights(state.matrices, d_k, loading)
    y_bf = beamform(weights, block.data)
    noise_bf = None if noise is None else beamform(weights, noise.data)
    return BeamformerOutput(y_bf, weights, noise_bf)


def fixed_mpdr(block: StftFrameBlock, d: np.ndarray, loading: float = DEFAULT_LOADING) -> np.ndarray:
    """Time-invariant MPDR weights ``(K, M)`` from the block-averaged noisy CPSDM.

    ``d`` is ``(M, K)``. The CPSDM is the mean of ``y y^H`` over every frame.
    """
    y = block.data
    L, K, M = y.shape
    d = np.asarray(d)
    if d.shape != (M, K):
        raise ValueError(f"steering shape {d.shape} does not match block ({M}, {K})")
    if L == 0:
        raise ValueError("cannot estimate a CPSDM from an empty block")
    c = hermitian_part(np.einsum("lkm,lkn->kmn", y, np.conj(y)) / L)
    return mpdr_weights(c, np.ascontiguousarray(d.T), loading)


def dump_weights_csv(path, weights: np.ndarray, frame: int) -> Path:
    """Write one frame of ``(L, K, M)`` weights as rows ``bin, mic, re, im``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "mic", "re", "im"])
        for k in range(weights.shape[1]):
            for m in range(weights.shape[2]):
                v = weights[frame, k, m]
                w.writerow([k, m, repr(float(v.real)), repr(float(v.imag))])
    return path
