import numpy as np
import pytest

from rmselect.scene.scenario import Scenario, SweepSection


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture(scope="session")
def short_scenario():
    """Close-talking scene shortened to 8 s so unit tests stay quick."""
    return Scenario(duration=8.0, sweep=SweepSection(n_competing=(2,), t_int=(0.5, 2.0), combos=2))


@pytest.fixture(scope="session")
def rendered_short(short_scenario):
    from rmselect.harness import combo_seed
    from rmselect.scene.render import render
    from rmselect.scene.scenario import build_scene

    scene = build_scene(short_scenario, 2, combo_seed(0, 2, 0))
    return render(short_scenario, scene)
