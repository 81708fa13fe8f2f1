from pathlib import Path

import numpy as np
import pytest

from rmselect.scene.scenario import (
    FULL_SCALE_SWEEP, Scenario, ScenarioError, build_scene, load_scenario, parse_scenario,
    validate_scenario_text,
)

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.parametrize("name", ["desk.yaml", "table.yaml"])
def test_shipped_scenarios_validate(name):
    sc = load_scenario(ROOT / "scenarios" / name)
    assert sc.schema_version == 1


def test_minimal_file_uses_defaults():
    sc = parse_scenario("schema_version: 1\n")
    assert sc.duration == 30.0 and sc.sweep.n_competing == (2, 4, 6)
    assert sc.room.spec().t60 == 0.3


def test_missing_version_reported():
    assert any("schema_version" in p for p in validate_scenario_text("duration: 5\n", "f.yaml"))


def test_unknown_field_has_line_and_allowed_list():
    text = "schema_version: 1\nroom:\n  dims: [7, 6, 3]\n  colour: red\n"
    problems = validate_scenario_text(text, "s.yaml")
    assert problems == [problems[0]]
    assert problems[0].startswith("s.yaml:4: room.colour: unknown field")
    assert "t60" in problems[0]


def test_type_error_reported_with_line():
    problems = validate_scenario_text("schema_version: 1\nduration: long\n", "s.yaml")
    assert problems[0].startswith("s.yaml:2: duration: expected a number")


def test_out_of_range_n_explains_layout():
    text = "schema_version: 1\nsweep:\n  n_competing: [2, 16]\n"
    problems = validate_scenario_text(text, "s.yaml")
    assert len(problems) == 1
    assert problems[0].startswith("s.yaml:3: sweep.n_competing.1")
    assert "16-position layout" in problems[0]


def test_every_problem_is_listed():
    text = "schema_version: 2\nmode: party\nsweep:\n  methods: [proposed, magic]\n  combos: 0\n"
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, "s.yaml")
    msgs = "\n".join(exc.value.problems)
    for key in ("schema_version", "mode", "sweep.methods", "sweep.combos"):
        assert key in msgs


def test_integration_time_longer_than_signal():
    assert validate_scenario_text("schema_version: 1\nduration: 1\nsweep:\n  t_int: [2]\n")


def test_not_yaml():
    assert "not valid YAML" in validate_scenario_text("a: [1,\n")[0]


def test_unreadable_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "absent.yaml")


def test_digest_changes_with_content():
    a = Scenario()
    assert a.digest() == Scenario().digest()
    assert a.digest() != a.with_sweep(seed=1).digest()
    assert a.with_sweep(**FULL_SCALE_SWEEP).sweep.combos == 40


def test_paths_resolve_against_file(tmp_path):
    (tmp_path / "s.yaml").write_text("schema_version: 1\nstimuli:\n  corpus: speech\n")
    sc = load_scenario(tmp_path / "s.yaml")
    assert sc.resolve(sc.stimuli.corpus) == tmp_path / "speech"


def test_build_scene_draws_without_replacement():
    sc = Scenario()
    for seed in range(20):
        s = build_scene(sc, 6, seed)
        assert s.target_position == 0
        assert len(set(s.competing_positions)) == 6 and 0 not in s.competing_positions
        assert sorted(s.channel_positions) == sorted((0,) + s.competing_positions)
        assert s.channel_positions[s.truth_channel] == 0
    assert build_scene(sc, 3, 5) == build_scene(sc, 3, 5)


def test_truth_channel_is_not_always_first():
    truths = {build_scene(Scenario(), 4, s).truth_channel for s in range(30)}
    assert len(truths) > 2


def test_excluded_azimuths_never_drawn():
    sc = Scenario().replace(geometry=Scenario().geometry.__class__(exclude_azimuths=(22.5, 337.5)))
    for seed in range(20):
        comp = build_scene(sc, 5, seed).competing_positions
        assert 1 not in comp and 15 not in comp
    assert sc.max_competing == 13


def test_beam_bank_scene():
    sc = parse_scenario("schema_version: 1\nmode: table_beam_bank\nsweep:\n  n_competing: [3]\n")
    s = build_scene(sc, 3, 1)
    assert s.channel_positions == (4, 3, 2, 9, 5) and s.truth_channel == 0
    assert 4 not in s.competing_positions and len(set(s.competing_positions)) == 3
    with pytest.raises(ScenarioError):
        build_scene(sc, 10, 0)


def test_target_must_have_a_beam():
    text = "schema_version: 1\nmode: table_beam_bank\nbeam_bank:\n  beams: [1, 2]\nsweep:\n  n_competing: [3]\n"
    assert any("no beam" in p for p in validate_scenario_text(text))
