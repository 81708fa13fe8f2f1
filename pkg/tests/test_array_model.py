import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmselect.array_model import (
    DegenerateReferenceError,
    HypothesisSet,
    SceneGeometry,
    SteeringVector,
    TransferFunctionSet,
    UnavailableAngleError,
    default_ha_offsets,
    load_ir_set,
    perturb_steering,
    ratf_from_atf,
    write_ir_set,
)
from rmselect.dsp import StftConfig
from rmselect.scene.rir import RoomSpec, image_rirs

from .conftest import crandn


def _tfs(column):
    atf = np.asarray(column, dtype=complex).reshape(1, -1, 1)
    return TransferFunctionSet(atf, np.zeros((1, atf.shape[1], 4)), 4)


def test_ratf_direct_division():
    d = ratf_from_atf(_tfs([2, 4j]), 0)
    np.testing.assert_array_equal(d.d[:, 0], [1, 2j])


def test_ratf_zero_reference():
    with pytest.raises(DegenerateReferenceError, match="bin 0"):
        ratf_from_atf(_tfs([0, 1]), 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-np.pi, np.pi), st.integers(0, 2**31))
def test_ratf_scale_invariant(mag, phase, seed):
    rng = np.random.default_rng(seed)
    atf = crandn(rng, 1, 4, 9) + 0.1
    c = mag * np.exp(1j * phase)
    a = ratf_from_atf(TransferFunctionSet(atf, np.zeros((1, 4, 16)), 16), 0)
    b = ratf_from_atf(TransferFunctionSet(atf * c, np.zeros((1, 4, 16)), 16), 0)
    np.testing.assert_allclose(a.d, b.d, rtol=1e-12, atol=1e-12)
    assert np.all(a.d[0] == 1.0)


def test_free_field_ratf_matches_geometry():
    fs, nfft = 16000, 512
    room = RoomSpec((8.0, 8.0, 4.0), t60=0.0)
    src = np.array([6.0, 4.0, 1.5])
    mics = np.array([[4.0, 4.1, 1.5], [4.0, 3.9, 1.5], [3.9, 4.0, 1.52]])
    irs = image_rirs(room, src, mics, fs)
    tfs = TransferFunctionSet.from_impulse_responses(irs[None], nfft)
    d = ratf_from_atf(tfs, 0).d
    dist = np.linalg.norm(mics - src, axis=1)
    tau = dist / 343.0
    k = np.arange(nfft // 2 + 1)
    band = k * fs / nfft <= 4000
    for m in range(3):
        expected = dist[0] / dist[m] * np.exp(-2j * np.pi * k * (tau[m] - tau[0]) * fs / nfft)
        # tolerance covers the passband ripple of the 8-tap fractional-delay kernel
        np.testing.assert_allclose(np.abs(d[m, band]), np.abs(expected[band]), rtol=1.5e-2)
        np.testing.assert_allclose(np.angle(d[m, band] / expected[band]), 0.0, atol=1e-2)


def test_steering_requires_exact_reference():
    with pytest.raises(ValueError):
        SteeringVector(np.full((2, 3), 1.0 + 1e-15j))


def test_steering_save_load(tmp_path, rng):
    d = SteeringVector.normalized(crandn(rng, 4, 257) + 2.0, 0, 0.0)
    d.save(tmp_path / "d.npz")
    e = SteeringVector.load(tmp_path / "d.npz")
    np.testing.assert_array_equal(d.d, e.d)
    assert e.azimuth_deg == 0.0


def test_perturb_substitute_identity_and_shape(rng):
    d = SteeringVector.normalized(crandn(rng, 4, 9) + 2.0)
    assert perturb_steering(d, substitute=d) is d
    with pytest.raises(ValueError):
        perturb_steering(d, substitute=SteeringVector.normalized(crandn(rng, 3, 9) + 2.0))
    with pytest.raises(ValueError):
        perturb_steering(d)


def test_perturb_jitter_keeps_reference(rng):
    d = SteeringVector.normalized(crandn(rng, 4, 9) + 2.0)
    j = perturb_steering(d, jitter=0.5, seed=3)
    assert np.all(j.d[0] == 1.0)
    assert not np.allclose(j.d[1:], d.d[1:])
    np.testing.assert_array_equal(perturb_steering(d, jitter=0.5, seed=3).d, j.d)


def test_perturb_rotate_picks_nearest(rng):
    atf = crandn(rng, 16, 4, 9) + 2.0
    tfs = TransferFunctionSet(atf, np.zeros((16, 4, 16)), 16, np.arange(16) * 22.5)
    d = ratf_from_atf(tfs, 0)
    r = perturb_steering(d, rotate=22.5, transfer=tfs)
    np.testing.assert_array_equal(r.d, ratf_from_atf(tfs, 1).d)
    r = perturb_steering(d, rotate=-30.0, transfer=tfs)
    assert r.azimuth_deg == pytest.approx(337.5)
    with pytest.raises(UnavailableAngleError):
        perturb_steering(d, rotate=10.0, transfer=TransferFunctionSet(atf[:1], np.zeros((1, 4, 16)), 16))


def test_perturb_rotate_missing_angle(rng):
    atf = crandn(rng, 2, 4, 9) + 2.0
    tfs = TransferFunctionSet(atf, np.zeros((2, 4, 16)), 16, [0.0, 10.0])
    d = ratf_from_atf(tfs, 0)
    with pytest.raises(UnavailableAngleError):
        perturb_steering(d, rotate=90.0, transfer=tfs)


def test_default_offsets():
    off = default_ha_offsets()
    assert off.shape == (4, 3)
    assert off[0, 1] > 0 and off[2, 1] < 0  # left then right
    assert off[0, 0] > off[1, 0]  # front before rear
    np.testing.assert_allclose(np.linalg.norm(off[0] - off[1]), 0.01)


def test_geometry_validation():
    g = SceneGeometry([7, 6, 3], [3.5, 3, 1.2], talker_positions=[(0, 1.9, 1.2), (90, 1.9, 1.2)],
                      rm_positions=[[5.2, 3, 1.2]])
    np.testing.assert_allclose(g.talker_xyz()[1], [3.5, 4.9, 1.2], atol=1e-12)
    with pytest.raises(ValueError, match="unique"):
        SceneGeometry([7, 6, 3], [3.5, 3, 1.2], talker_positions=[(0, 1, 1), (360, 1, 1)])
    with pytest.raises(ValueError, match="outside"):
        SceneGeometry([7, 6, 3], [3.5, 3, 1.2], talker_positions=[(0, 5.0, 1.2)])
    with pytest.raises(ValueError):
        SceneGeometry([7, 6, 3], [3.5, 3, 1.2], ha_mic_offsets=[[0, 0, 0]])


def test_geometry_yaw_rotates_mics():
    g = SceneGeometry([7, 6, 3], [3.5, 3, 1.2], ha_yaw_deg=90.0)
    # left-front mic now points along -x (the head's left is world -x)
    assert g.ha_mic_positions()[0, 0] < 3.5
    np.testing.assert_allclose(g.direction(0.0), [0, 1, 0], atol=1e-12)


def test_hypothesis_set(rng):
    d = SteeringVector.normalized(crandn(rng, 2, 3) + 2.0)
    assert HypothesisSet(("a", "b"), d).num_channels == 2
    with pytest.raises(ValueError):
        HypothesisSet(("a", "a"), d)


def test_ir_set_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    irs = rng.uniform(-0.5, 0.5, (3, 2, 600))
    tfs = TransferFunctionSet.from_impulse_responses(irs, 512, [0.0, 90.0, 180.0])
    write_ir_set(tmp_path, tfs, 16000)
    back = load_ir_set(tmp_path, StftConfig())
    np.testing.assert_allclose(back.impulse_responses, irs.astype(np.float32))
    np.testing.assert_array_equal(back.azimuths, [0.0, 90.0, 180.0])
    assert back.index_of_azimuth(90.0) == 1
