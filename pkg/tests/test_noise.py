import numpy as np
import pytest

from rmselect.scene.noise import (
    ZeroEnergyError, calibrate_snr, cylindrical_coherence, isotropic_noise, msc, snr_db,
    spherical_coherence,
)
from rmselect.scene.rir import RoomSpec, image_rirs

FS = 16000


def test_calibration_hits_target(rng):
    s, n = rng.standard_normal(5000), 3 * rng.standard_normal(5000)
    g = calibrate_snr(s, n, 15.0)
    assert snr_db(s, g * n) == pytest.approx(15.0, abs=1e-9)
    with pytest.raises(ZeroEnergyError):
        calibrate_snr(np.zeros(4), n, 0.0)


def test_snr_caps():
    assert snr_db(np.ones(3), np.zeros(3)) == 120.0
    assert snr_db(np.zeros(3), np.ones(3)) == -120.0


def test_coherence_models_at_zero_and_first_null():
    assert spherical_coherence(0.0, 0.1) == pytest.approx(1.0)
    assert spherical_coherence(343.0 / 0.2, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert cylindrical_coherence(0.0, 0.1) == pytest.approx(1.0)
    # first zero of J0 at 2.4048
    f0 = 2.404825557695773 * 343.0 / (2 * np.pi * 0.1)
    assert cylindrical_coherence(f0, 0.1) == pytest.approx(0.0, abs=1e-12)


def test_isotropic_ring_coherence_follows_bessel():
    """Free-field sources on a horizontal ring approximate a cylindrically isotropic field."""
    room = RoomSpec(dims=(20, 20, 6), t60=0.0)
    centre = np.array([10.0, 10.0, 3.0])
    spacing = 0.1
    mics = centre + np.array([[-spacing / 2, 0, 0], [spacing / 2, 0, 0]])
    ang = np.deg2rad(np.arange(0, 360, 7.5))
    srcs = centre + 5.0 * np.stack([np.cos(ang), np.sin(ang), 0 * ang], axis=1)
    irs = np.stack([image_rirs(room, s, mics, FS) for s in srcs])
    x = isotropic_noise(irs, 20 * FS, seed=3)
    f, c = msc(x[0], x[1], FS)
    band = (f > 200) & (f < 3000)
    assert np.max(np.abs(c[band] - cylindrical_coherence(f[band], spacing))) < 0.1


def test_isotropic_noise_validation():
    with pytest.raises(ValueError):
        isotropic_noise(np.zeros((0, 2, 4)), 100, 0)
    bad = np.zeros((1, 1, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        isotropic_noise(bad, 100, 0)


def test_isotropic_noise_deterministic():
    irs = np.zeros((2, 2, 3))
    irs[:, :, 0] = 1.0
    a = isotropic_noise(irs, 1000, np.random.default_rng(0).integers(1 << 30))
    b = isotropic_noise(irs, 1000, int(np.random.default_rng(0).integers(1 << 30)))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a[0], a[1])
