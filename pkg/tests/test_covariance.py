import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmselect.covariance import (
    ALPHA_Y, Cpsdm, SingularMatrixError, cholesky_solve, recursive_cpsdm, solve_hermitian,
    update_cpsdm, warmup_frames,
)

from .conftest import crandn


def test_alpha_matches_time_constant():
    # exp(-hop / tau) with a 16 ms hop and 96 ms time constant
    assert ALPHA_Y == pytest.approx(np.exp(-16.0 / 96.0), abs=1e-4)


def test_warmup_is_three_time_constants():
    assert warmup_frames() == 20
    assert warmup_frames(0.5) == 6
    with pytest.raises(ValueError):
        warmup_frames(1.0)


def test_initial_state_is_scaled_identity():
    s = Cpsdm.initial(5, 3)
    np.testing.assert_array_equal(s.matrices, 1e-6 * np.broadcast_to(np.eye(3), (5, 3, 3)))
    assert s.frames_seen == 0


def test_update_matches_closed_form(rng):
    K, M, L = 4, 3, 12
    y = crandn(rng, L, K, M)
    a = 0.7
    out = recursive_cpsdm(y, smoothing=a, scale=0.0)
    # closed form of the recursion from a zero start
    expected = sum(a ** (L - 1 - j) * (1 - a) * np.einsum("km,kn->kmn", y[j], y[j].conj())
                   for j in range(L))
    np.testing.assert_allclose(out[-1], expected, rtol=1e-12, atol=1e-14)


def test_update_keeps_hermitian_psd(rng):
    s = Cpsdm.initial(6, 4)
    for _ in range(30):
        s = update_cpsdm(s, crandn(rng, 6, 4))
    np.testing.assert_array_equal(s.matrices, np.conj(np.swapaxes(s.matrices, -1, -2)))
    assert np.all(np.linalg.eigvalsh(s.matrices) > 0)
    assert s.frames_seen == 30


def test_update_rejects_wrong_shape():
    with pytest.raises(ValueError, match="does not match"):
        update_cpsdm(Cpsdm.initial(4, 2), np.zeros((4, 3)))


def test_smoothing_range():
    with pytest.raises(ValueError):
        Cpsdm.initial(2, 2, smoothing=1.5)


def test_cholesky_solve_matches_numpy(rng):
    a = crandn(rng, 7, 4, 4)
    c = a @ np.conj(np.swapaxes(a, -1, -2)) + 0.1 * np.eye(4)
    b = crandn(rng, 7, 4)
    x = cholesky_solve(c, b)
    np.testing.assert_allclose(x, np.linalg.solve(c, b[..., None])[..., 0], rtol=1e-10, atol=1e-12)


def test_cholesky_rejects_indefinite():
    c = np.diag([1.0, -1.0]).astype(complex)
    with pytest.raises(SingularMatrixError):
        cholesky_solve(c, np.ones(2, complex))


def test_loading_rescues_rank_one(rng):
    v = crandn(rng, 3)
    c = np.outer(v, v.conj())
    x = solve_hermitian(c, v)
    loaded = c + 1e-6 * np.trace(c).real / 3 * np.eye(3)
    np.testing.assert_allclose(loaded @ x, v, rtol=1e-8, atol=1e-10)


def test_solve_rejects_negative_loading():
    with pytest.raises(ValueError):
        solve_hermitian(np.eye(2), np.ones(2), loading=-1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 6), cond=st.floats(0.0, 8.0))
def test_solve_residual_property(seed, m, cond):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(crandn(rng, m, m))
    eig = np.logspace(0, -cond, m)
    c = (q * eig) @ q.conj().T
    b = crandn(rng, m)
    x = solve_hermitian(c, b, loading=0.0 if cond < 6 else 1e-6)
    loaded = c if cond < 6 else c + 1e-6 * np.trace(c).real / m * np.eye(m)
    res = np.linalg.norm(loaded @ x - b) / (np.linalg.norm(loaded, 2) * np.linalg.norm(x) + np.linalg.norm(b))
    assert res <= 1e-10
