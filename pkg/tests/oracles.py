"""Independent reference computations used by unit and acceptance tests."""

import numpy as np


def grid_max_loglik(y_bf, remotes, sigma2, points=41, rounds=25, shrink=4.0):
    """Maximise ``-sum_j |Y_bf - A Y_r|^2 / s2`` over complex ``A`` by zooming grid search.

    ``y_bf`` (D, K), ``remotes`` (D, K, R), ``sigma2`` (D, K). Returns the summed
    per-bin maxima for each channel, shape (R,). The search never uses the
    closed-form maximiser; the initial box comes from the Cauchy-Schwarz bound
    ``|A| <= sqrt(sum|Y_bf|^2/s2 / sum|Y_r|^2/s2)``.
    """
    yb = np.asarray(y_bf)[:, :, None]
    yr = np.asarray(remotes)
    inv = 1.0 / np.asarray(sigma2)[:, :, None]
    bound = np.sqrt(np.sum(np.abs(yb) ** 2 * inv, axis=0) / np.sum(np.abs(yr) ** 2 * inv, axis=0))
    centre = np.zeros(bound.shape, dtype=complex)  # (K, R)
    half = 1.1 * bound
    g = np.linspace(-1.0, 1.0, points)
    offs = (g[:, None] + 1j * g[None, :]).ravel()  # (P,)

    def loglik(a):  # a: (P, K, R)
        resid = yb[None] - a[:, None] * yr[None]
        return -np.sum(np.abs(resid) ** 2 * inv[None], axis=1)

    best = loglik(centre[None])[0]
    for _ in range(rounds):
        cand = centre[None] + half[None] * offs[:, None, None]
        ll = loglik(cand)
        i = np.argmax(ll, axis=0)
        centre = np.take_along_axis(cand, i[None], axis=0)[0]
        best = np.take_along_axis(ll, i[None], axis=0)[0]
        half = half / shrink
    return best.sum(axis=0)


def r_independent_constant(y_bf, sigma2):
    """The part of the maximised log-likelihood shared by every channel."""
    return float(np.sum(np.abs(y_bf) ** 2 / sigma2))
