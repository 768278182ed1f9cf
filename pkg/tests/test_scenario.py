import copy

import numpy as np
import pytest
import tomli_w

from thzrecon.exceptions import ConfigError, UnderResolvedGridError
from thzrecon.scenario import SHIPPED, Scenario, read_config_text, shipped_config_path
from thzrecon.units import ev_to_au

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def shipped_doc(name):
    return tomllib.loads(read_config_text(name))


def variant(name, **edits):
    doc = shipped_doc(name)
    for path, value in edits.items():
        table, key = path.split("__")
        if value is None:
            doc[table].pop(key)
        else:
            doc[table][key] = value
    return doc


@pytest.mark.parametrize("name", SHIPPED)
@pytest.mark.parametrize("quick", [False, True])
def test_shipped_configs_round_trip(name, quick):
    s = Scenario.load(name, quick=quick)
    back = Scenario.from_toml(s.to_toml())
    assert back == s
    assert back.config_hash() == s.config_hash()
    assert Scenario.load(shipped_config_path(name), quick=quick) == s


def test_two_level_contents():
    s = Scenario.load("two_level")
    system = s.level_system()
    np.testing.assert_allclose(system.energies, [ev_to_au(-13.6), ev_to_au(-3.4)])
    assert s.fields().xuv.sigma == pytest.approx(87.78, abs=0.01)
    assert s.fields().alpha == -0.001
    assert not system.has_decay


def test_four_level_contents():
    s = Scenario.load("four_level")
    system = s.level_system()
    assert system.labels == ("g", "e1", "e2", "e3")
    assert s.n_trajectories == 100
    assert [c.rate for c in system.channels] == [0.007, 0.007]
    assert s.model_params().level_widths == (0.0, 0.0, 0.0035, 0.0035)
    assert s.delays()[0] - s.time_origin == pytest.approx(-200.0)
    assert s.time_grid()[0] == system.t0
    assert s.settled_delay() - s.time_origin == pytest.approx(200 + 180 + 2 * s.fields().xuv.sigma)


def test_quick_profile_and_seed_override():
    full = Scenario.load("four_level")
    quick = Scenario.load("four_level", quick=True)
    assert quick.n_trajectories == 20 and quick.delays().size < full.delays().size
    assert quick.config_hash() != full.config_hash()
    seeded = Scenario.load("four_level", seed=5)
    assert seeded.seed == 5 and seeded.config_hash() != full.config_hash()
    assert Scenario.load("four_level").config_hash() == full.config_hash()


@pytest.mark.parametrize(
    "edits",
    [
        {"xuv__duration": -5.0},
        {"xuv__e0": 0.0},
        {"levels__energy_unit": "furlong"},
        {"levels__populations": [0.5, 0.2, 0.1, 0.1]},
        {"levels__populations": None},
        {"scenario__n_trajectories": 0},
        {"grids__delay_step": 0.15},
        {"grids__p_start": 1.8},
        {"grids__delay_start": -800.0},
        {"reconstruction__calibration": "guess"},
        {"reconstruction__phase_pair": ["e1", "x"]},
    ],
)
def test_invalid_four_level_configs(edits):
    with pytest.raises(ConfigError):
        Scenario.from_dict(variant("four_level", **edits))


def test_unknown_table_and_bad_toml():
    doc = shipped_doc("two_level")
    doc["extras"] = {"a": 1}
    with pytest.raises(ConfigError):
        Scenario.from_dict(doc)
    with pytest.raises(ConfigError):
        Scenario.from_toml("[scenario\nname=1")
    with pytest.raises(ConfigError):
        Scenario.load("/nonexistent/file.cfg")


def test_coarse_grids_are_under_resolved():
    with pytest.raises(UnderResolvedGridError):
        Scenario.from_dict(variant("two_level", grids__p_step=0.02))
    with pytest.raises(UnderResolvedGridError):
        Scenario.from_dict(variant("two_level", grids__dt=0.5, grids__delay_step=1.0))


def test_toml_is_written_deterministically():
    s = Scenario.load("two_level")
    doc = copy.deepcopy(s.to_dict())
    assert tomli_w.dumps(doc) == s.to_toml()
