import numpy as np
import pytest

from thzrecon.dynamics import LevelSystem, propagate_schrodinger, uniform_grid
from thzrecon.units import FieldConfig, ThzPulse, XuvPulse, ev_to_au, fs_to_au, fwhm_to_sigma, thz_to_au

ACCEPTANCE_LINES: list[str] = []

TWO_LEVEL_E = (ev_to_au(-13.6), ev_to_au(-3.4))
SIGMA_5FS = fwhm_to_sigma(fs_to_au(5.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def xuv():
    return XuvPulse(0.005, 2.0, SIGMA_5FS)


@pytest.fixture
def fields_on(xuv):
    return FieldConfig(xuv, ThzPulse(0.001, thz_to_au(4.0)))


@pytest.fixture
def fields_off(xuv):
    return FieldConfig(xuv)


def two_level_trajectory(phi=0.0, pops=(0.5, 0.5), span=450.0, stop=None, dt=0.1):
    system = LevelSystem.from_populations(TWO_LEVEL_E, list(pops), [0.0, phi], t0=0.0)
    t = uniform_grid(-span, span if stop is None else stop, dt)
    return system, propagate_schrodinger(system, t)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
