import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmselect.dsp import (
    StftConfig,
    StftFrameBlock,
    WavError,
    make_window,
    read_wav,
    stft_analyze,
    stft_synthesize,
    write_wav,
)

CFG = StftConfig()


def test_window_closed_form():
    n = np.arange(512)
    expected = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / 512))
    np.testing.assert_allclose(make_window(512), expected, atol=1e-15)


def test_window_length_two():
    np.testing.assert_allclose(make_window(2), [0.0, 1.0], atol=1e-15)


@pytest.mark.parametrize("length", [0, 3, 511, -2])
def test_window_rejects_odd_or_empty(length):
    with pytest.raises(ValueError):
        make_window(length)


def test_cola_squared_windows():
    w2 = make_window(512) ** 2
    total = np.zeros(512 * 6)
    for start in range(0, len(total) - 512 + 1, 256):
        total[start : start + 512] += w2
    np.testing.assert_allclose(total[512:-512], 1.0, atol=1e-12)


def test_config_invariants():
    with pytest.raises(ValueError):
        StftConfig(hop=128)
    with pytest.raises(ValueError):
        StftConfig(fft_size=256)
    with pytest.raises(ValueError):
        StftConfig(sample_rate=0)
    assert CFG.num_bins == 257


def test_zero_input_gives_zero_block():
    blk = stft_analyze(np.zeros((2, 4096)), CFG)
    assert not np.any(blk.data)
    assert not np.any(stft_synthesize(blk))


def test_sine_energy_at_bin_32():
    t = np.arange(16000) / 16000
    blk = stft_analyze(np.sin(2 * np.pi * 1000 * t), CFG)
    mag = np.abs(blk.data[:, :, 0])
    assert np.all(np.argmax(mag, axis=1) == 32)
    # periodic Hann^0.5 leaks only into the nearest bins for an integer-bin tone
    frac = (mag[:, 31:34] ** 2).sum(axis=1) / (mag ** 2).sum(axis=1)
    assert frac.min() > 0.99


def test_impulse_frame_zero_is_window_sample():
    x = np.zeros(2048)
    x[0] = 1.0
    blk = stft_analyze(x, CFG)
    np.testing.assert_allclose(blk.data[0, :, 0], make_window(512)[0], atol=1e-15)


def test_frame_layout():
    x = np.random.default_rng(0).standard_normal(5000)
    blk = stft_analyze(x, CFG)
    assert blk.num_frames == 1 + (5000 - 512) // 256
    l = 7
    ref = np.fft.rfft(x[l * 256 : l * 256 + 512] * make_window(512))
    np.testing.assert_allclose(blk.data[l, :, 0], ref, atol=1e-12)


def test_too_short_signal_rejected():
    with pytest.raises(ValueError):
        stft_analyze(np.zeros(100), CFG)


def test_parseval_per_frame():
    x = np.random.default_rng(1).standard_normal(4096)
    blk = stft_analyze(x, CFG)
    spec = blk.data[:, :, 0]
    full = np.concatenate([spec, np.conj(spec[:, -2:0:-1])], axis=1)
    freq_energy = np.sum(np.abs(full) ** 2, axis=1) / 512
    w = make_window(512)
    time_energy = [np.sum((x[l * 256 : l * 256 + 512] * w) ** 2) for l in range(blk.num_frames)]
    np.testing.assert_allclose(freq_energy, time_energy, rtol=1e-9)


def test_single_frame_synthesis():
    x = np.random.default_rng(2).standard_normal(512)
    out = stft_synthesize(stft_analyze(x, CFG))[0]
    np.testing.assert_allclose(out, make_window(512) ** 2 * x, atol=1e-12)


def test_round_trip_snr_30s_noise():
    x = np.random.default_rng(3).standard_normal(30 * 16000)
    y = stft_synthesize(stft_analyze(x, CFG))[0]
    ss = slice(512, len(y) - 512)
    err = x[ss] - y[ss]
    assert 10 * np.log10(np.sum(x[ss] ** 2) / np.sum(err ** 2)) >= 60.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(1024, 3000), elements=st.floats(-1e3, 1e3)))
def test_round_trip_arbitrary_signal(x):
    y = stft_synthesize(stft_analyze(x, CFG))[0]
    ss = slice(512, len(y) - 512)
    norm = np.linalg.norm(x[ss])
    if norm > 0:
        assert np.linalg.norm(x[ss] - y[ss]) / norm <= 1e-6


def test_edge_frames_flagged():
    blk = stft_analyze(np.zeros(4096), CFG)
    assert blk.edge_frames[0] and blk.edge_frames[-1] and not blk.edge_frames[1:-1].any()


def test_block_rejects_bin_mismatch():
    with pytest.raises(ValueError):
        StftFrameBlock(np.zeros((2, 100, 1)), CFG)


def test_wav_round_trip(tmp_path):
    x = np.random.default_rng(4).uniform(-0.5, 0.5, (3, 1000))
    write_wav(tmp_path / "a.wav", x, 16000)
    y, rate = read_wav(tmp_path / "a.wav", CFG)
    assert rate == 16000
    np.testing.assert_allclose(y, x.astype(np.float32), atol=0)
    write_wav(tmp_path / "b.wav", x, 16000, fmt="pcm16")
    z, _ = read_wav(tmp_path / "b.wav")
    np.testing.assert_allclose(z, x, atol=1 / 32768)


def test_wav_rate_mismatch(tmp_path):
    write_wav(tmp_path / "a.wav", np.zeros(100), 8000)
    with pytest.raises(WavError):
        read_wav(tmp_path / "a.wav", CFG)


def test_corrupt_wav(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"RIFF\x00\x00junk")
    with pytest.raises(WavError):
        read_wav(tmp_path / "bad.wav")
