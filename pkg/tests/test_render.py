import json

import numpy as np
import pytest
from scipy.signal import correlate

from rmselect.harness import combo_seed, snr_report
from rmselect.scene.noise import snr_db
from rmselect.scene.render import export_scene, layout_for, render, render_beam_bank, render_scene
from rmselect.scene.scenario import RoomSection, Scenario, SweepSection, build_scene, parse_scenario


def test_stem_sum_identity(rendered_short):
    rs = rendered_short
    assert np.array_equal(rs.mixture(), rs.clean_stems.sum(axis=0) + rs.noise_stems)


def test_render_is_deterministic(short_scenario, rendered_short):
    again = render(short_scenario, build_scene(short_scenario, 2, combo_seed(0, 2, 0)))
    assert np.array_equal(again.mixture(), rendered_short.mixture())
    assert np.array_equal(again.steering.d, rendered_short.steering.d)


def test_truth_channel_carries_target(rendered_short):
    rs = rendered_short
    assert rs.channel_talker[rs.truth_channel] == 0
    assert sorted(rs.channel_talker) == [0, 1, 2]


def test_noise_calibrated_at_reference(rendered_short):
    rs = rendered_short
    assert snr_db(rs.clean_stems[0, 0], rs.noise_stems[0]) == pytest.approx(15.0, abs=1e-6)
    # each RM carries independent SSN at the reference noise level
    ref = np.sqrt(np.mean(rs.noise_stems[0] ** 2))
    for r in range(rs.num_remote):
        assert np.sqrt(np.mean(rs.noise_stems[rs.num_ha + r] ** 2)) == pytest.approx(ref, rel=1e-6)


def test_target_rm_snr_exceeds_ha_reference(rendered_short):
    rs = rendered_short
    rep = {r["sensor"]: r["snr_db"] for r in snr_report(rs)}
    assert rep[f"remote_{rs.truth_channel}"] > rep["ha_mic_0"]


def test_steering_is_reference_normalised(rendered_short):
    d = rendered_short.steering.d
    assert d.shape == (4, 257)
    np.testing.assert_array_equal(d[0], 1.0)


@pytest.fixture(scope="module")
def anechoic():
    sc = Scenario(duration=2.0, room=RoomSection(t60=0.0),
                  sweep=SweepSection(n_competing=(1,), t_int=(0.5,), combos=1))
    sc = sc.replace(noise=sc.noise.__class__(rm_noise_mode="none"))
    return sc, render(sc, build_scene(sc, 1, 3))


def test_anechoic_delays_match_geometry(anechoic):
    sc, rs = anechoic
    lay = layout_for(sc)
    M = rs.num_ha
    src = lay.sources[0]
    stem = rs.clean_stems[0]
    sensors = np.concatenate([lay.ha_mics, lay.remote_mics[list(rs.info["channel_positions"])]])
    ref = 0
    for s in range(1, M + rs.num_remote):
        if not np.any(stem[s]):
            continue
        lag = np.argmax(correlate(stem[s], stem[ref], mode="full", method="fft")) - (stem.shape[1] - 1)
        geo = (np.linalg.norm(sensors[s] - src) - np.linalg.norm(sensors[ref] - src)) * 16000 / 343.0
        assert abs(lag - geo) <= 1.0


def test_render_rejects_wrong_mode():
    sc = parse_scenario("schema_version: 1\nmode: table_beam_bank\nsweep:\n  n_competing: [3]\n")
    with pytest.raises(ValueError):
        render(sc, build_scene(sc, 3, 0))


@pytest.fixture(scope="module")
def small_table():
    text = """
schema_version: 1
mode: table_beam_bank
duration: 10.0
room: {dims: [10.0, 8.0, 3.0], t60: 0.0}
sweep: {n_competing: [3], t_int: [0.5], combos: 1, methods: [proposed]}
"""
    sc = parse_scenario(text)
    return sc, render_scene(sc, build_scene(sc, 3, 2))


def test_beam_bank_stem_sum_and_truth(small_table):
    sc, rs = small_table
    assert rs.num_remote == 5 and rs.truth_channel == 0
    assert np.array_equal(rs.mixture(), rs.clean_stems.sum(axis=0) + rs.noise_stems)


def test_target_beam_has_best_snr(small_table):
    sc, rs = small_table
    rep = [r["snr_db"] for r in snr_report(rs) if r["kind"] == "remote"]
    assert int(np.argmax(rep)) == rs.truth_channel
    assert rep[rs.truth_channel] > max(r["snr_db"] for r in snr_report(rs) if r["kind"] == "ha_mic")


def test_export_scene(tmp_path, anechoic):
    _, rs = anechoic
    side = export_scene(rs, tmp_path)
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth == json.loads(json.dumps(side))
    assert truth["truth_channel"] == rs.truth_channel
    assert (tmp_path / "steering.npz").exists()
    assert {"ha.wav", "remote_1.wav", "stem_talker0.wav"} <= set(truth["sha256"])
    again = export_scene(rs, tmp_path / "b")
    assert again["sha256"] == side["sha256"]
