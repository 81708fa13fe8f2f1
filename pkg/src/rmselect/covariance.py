"""Recursive noisy CPSDM estimation and loaded Hermitian solves.

Everything is batched over leading axes: a ``(K, M, M)`` stack is one
matrix per frequency bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ALPHA_Y",
    "Cpsdm",
    "SingularMatrixError",
    "update_cpsdm",
    "solve_hermitian",
    "cholesky_solve",
    "hermitian_part",
    "warmup_frames",
]

# 96 ms time constant at a 16 ms hop
ALPHA_Y = 0.8465
INIT_SCALE = 1e-6
DEFAULT_LOADING = 1e-6


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def hermitian_part(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))


def warmup_frames(alpha: float = ALPHA_Y) -> int:
    """Frames before the recursion is considered converged (three time constants)."""
    if alpha >= 1.0:
        raise ValueError("alpha must be < 1 for a finite warm-up")
    return math.ceil(3.0 / (1.0 - alpha))


@dataclass
class Cpsdm:
    matrices: np.ndarray  # (K, M, M)
    smoothing: float = ALPHA_Y
    frames_seen: int = 0

    @classmethod
    def initial(cls, num_bins: int, num_mics: int, smoothing: float = ALPHA_Y,
                scale: float = INIT_SCALE) -> "Cpsdm":
        if not 0.0 <= smoothing <= 1.0:
            raise ValueError("smoothing must lie in [0, 1]")
        eye = np.broadcast_to(np.eye(num_mics, dtype=complex), (num_bins, num_mics, num_mics))
        return cls(scale * eye.copy(), smoothing, 0)

    @property
    def num_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_mics(self) -> int:
        return self.matrices.shape[-1]


def update_cpsdm(state: Cpsdm, frame: np.ndarray) -> Cpsdm:
    """One step of ``C <- a*C + (1-a)*y y^H`` for every bin; ``frame`` is (K, M)."""
    y = np.asarray(frame)
    if y.shape != (state.num_bins, state.num_mics):
        raise ValueError(
            f"frame shape {y.shape} does not match CPSDM ({state.num_bins}, {state.num_mics})"
        )
    a = state.smoothing
    outer = y[:, :, None] * np.conj(y[:, None, :])
    c = hermitian_part(a * state.matrices + (1.0 - a) * outer)
    return Cpsdm(c, a, state.frames_seen + 1)


def recursive_cpsdm(frames: np.ndarray, smoothing: float = ALPHA_Y,
                    scale: float = INIT_SCALE) -> np.ndarray:
    """Run :func:`update_cpsdm` over a ``(L, K, M)`` block; returns ``(L, K, M, M)``.

    Entry ``l`` is the estimate after frame ``l`` has been absorbed.
    """
    L, K, M = frames.shape
    state = Cpsdm.initial(K, M, smoothing, scale)
    out = np.empty((L, K, M, M), dtype=complex)
    for l in range(L):
        state = update_cpsdm(state, frames[l])
        out[l] = state.matrices
    return out


def cholesky_solve(c: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``c x = b`` for a batch of Hermitian PD ``c`` via Cholesky.

    ``c`` is ``(..., M, M)``, ``b`` is ``(..., M)``. Forward and back
    substitution loop over M only, so the batch stays vectorised.
    """
    try:
        low = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite after loading") from exc
    diag = np.diagonal(low, axis1=-2, axis2=-1)
    if not np.all(np.isfinite(diag)) or np.any(diag.real <= 0):
        raise SingularMatrixError("Cholesky factor has a non-positive pivot")
    m = c.shape[-1]
    z = np.empty(np.broadcast_shapes(b.shape, c.shape[:-1]), dtype=np.result_type(c, b, complex))
    for i in range(m):
        acc = b[..., i] - np.einsum("...j,...j->...", low[..., i, :i], z[..., :i])
        z[..., i] = acc / low[..., i, i]
    x = np.empty_like(z)
    low_h = np.conj(np.swapaxes(low, -1, -2))
    for i in range(m - 1, -1, -1):
        acc = z[..., i] - np.einsum("...j,...j->...", low_h[..., i, i + 1:], x[..., i + 1:])
        x[..., i] = acc / low_h[..., i, i]
    return x


def solve_hermitian(c: np.ndarray, b: np.ndarray, loading: float = DEFAULT_LOADING) -> np.ndarray:
    """Solve ``(C + loading * tr(C)/M * I) x = b`` (batched over leading axes)."""
    c = np.asarray(c)
    b = np.asarray(b)
    if loading < 0:
        raise ValueError("loading must be non-negative")
    if c.shape[-1] != c.shape[-2] or b.shape[-1] != c.shape[-1]:
        raise ValueError(f"incompatible shapes {c.shape} and {b.shape}")
    m = c.shape[-1]
    if loading:
        tr = np.real(np.trace(c, axis1=-2, axis2=-1)) / m
        c = c + (loading * tr)[..., None, None] * np.eye(m)
    return cholesky_solve(c, b)
