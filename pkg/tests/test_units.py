import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from thzrecon.units import (
    FieldConfig,
    ThzPulse,
    UnitSystem,
    XuvPulse,
    au_to_ev,
    au_to_fs,
    au_to_thz,
    ev_to_au,
    fs_to_au,
    fwhm_to_sigma,
    thz_to_au,
)


def test_reference_conversions():
    assert fwhm_to_sigma(fs_to_au(5.0)) == pytest.approx(87.78, abs=0.01)
    assert thz_to_au(4.0) == pytest.approx(6.0795e-4, rel=1e-4)
    # two-level gap of 10.2 eV beats with a 0.405 fs period
    delta = ev_to_au(13.6 - 3.4)
    assert au_to_fs(2 * math.pi / delta) == pytest.approx(0.405, rel=2e-3)


@given(st.floats(1e-3, 1e3))
def test_round_trips(x):
    assert au_to_ev(ev_to_au(x)) == pytest.approx(x, rel=1e-12)
    assert au_to_fs(fs_to_au(x)) == pytest.approx(x, rel=1e-12)
    assert au_to_thz(thz_to_au(x)) == pytest.approx(x, rel=1e-12)


def test_unit_system_rejects_unknown_unit():
    assert UnitSystem.energy(1.0, "au") == 1.0
    with pytest.raises(ValueError):
        UnitSystem.energy(1.0, "kcal")


@pytest.mark.parametrize("kwargs", [dict(e0=-1, omega=1, sigma=1), dict(e0=1, omega=1, sigma=0)])
def test_xuv_rejects_nonpositive(kwargs):
    with pytest.raises(ValueError):
        XuvPulse(**kwargs)


def test_xuv_vector_potential_is_minus_integral_of_field():
    pulse = XuvPulse(0.01, 0.8, 12.0)
    for t in (-30.0, -3.0, 0.0, 7.5, 40.0):
        integral, _ = quad(pulse.field, -200.0, t, limit=400)
        assert pulse.vector_potential(t) == pytest.approx(-integral, abs=1e-10)
    # nothing left after the pulse: A(+inf) = -area, tiny for omega*sigma >> 1
    assert abs(pulse.vector_potential(500.0)) < 1e-12


@pytest.mark.parametrize("envelope", ["sin2", "gaussian"])
def test_thz_zero_crossing_and_slope(envelope):
    thz = ThzPulse(0.001, thz_to_au(4.0), envelope=envelope, center=100.0)
    assert thz.vector_potential(100.0) == pytest.approx(0.0, abs=1e-15)
    h = 1e-2
    slope = (thz.vector_potential(100.0 + h) - thz.vector_potential(100.0 - h)) / (2 * h)
    assert slope == pytest.approx(-0.001, rel=1e-6)
    assert thz.slope == -0.001
    # E = -dA/dt everywhere
    t = np.linspace(-3000, 3000, 7) + 100.0
    d_a = (thz.vector_potential(t + h) - thz.vector_potential(t - h)) / (2 * h)
    np.testing.assert_allclose(thz.field(t), -d_a, atol=1e-9)


def test_field_config_alpha_and_shift():
    fc = FieldConfig(XuvPulse(0.005, 2.0, 87.8), ThzPulse(0.001, 6e-4))
    assert fc.alpha == -0.001
    assert fc.without_thz().alpha == 0.0
    moved = fc.at(50.0)
    assert moved.xuv.center == 50.0 and moved.thz.center == 50.0


@settings(max_examples=25)
@given(st.floats(-300, 300))
def test_field_config_superposes(t):
    xuv = XuvPulse(0.005, 2.0, 87.8)
    thz = ThzPulse(0.001, 6e-4)
    fc = FieldConfig(xuv, thz)
    assert fc.field(t) == pytest.approx(xuv.field(t) + thz.field(t), abs=1e-15)
    assert fc.vector_potential(t) == pytest.approx(xuv.vector_potential(t) + thz.vector_potential(t), abs=1e-15)
