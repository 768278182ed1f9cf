import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzrecon.dynamics import DensityMatrixSeries
from thzrecon.exceptions import ConfigError
from thzrecon.model import (
    PeakModelParams,
    basis,
    channel_amplitudes,
    characteristic_momentum,
    format_peak_table,
    fringe_phase_law,
    fringe_wavenumber,
    model_spectrogram,
    model_spectrum,
    peak_table,
    relative_phase,
    suppression,
)

IPS = (0.5, 0.29, 0.18, 0.06)
P = np.linspace(1.6, 2.1, 301)

params_st = st.builds(
    PeakModelParams,
    omega=st.just(2.0),
    sigma=st.floats(30.0, 150.0),
    alpha=st.floats(-0.002, 0.002),
    ionization_potentials=st.just(IPS),
    e0=st.floats(0.001, 0.01),
    cubic_correction=st.booleans(),
    level_widths=st.one_of(st.none(), st.tuples(*[st.floats(0.0, 0.005)] * 4)),
)


def random_rho(rng, n=4, rank=2):
    v = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = v.conj() @ v.T  # rho_ij = sum_k conj(c_i) c_j
    return rho / np.trace(rho).real


@settings(max_examples=40, deadline=None)
@given(params_st)
def test_basis_is_hermitian_rank_one(params):
    bas = basis(params, P)
    np.testing.assert_allclose(bas, np.conj(np.transpose(bas, (0, 2, 1))), atol=1e-14 * np.abs(bas).max())
    a = channel_amplitudes(params, P)
    np.testing.assert_allclose(bas, np.einsum("ip,jp->pij", np.conj(a), a), atol=1e-12 * np.abs(bas).max())


@settings(max_examples=40, deadline=None)
@given(params_st, st.integers(0, 2**32 - 1))
def test_spectrum_of_a_state_is_nonnegative_and_linear(params, seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_rho(rng), random_rho(rng)
    s1 = model_spectrum(r1, params, P).total
    s2 = model_spectrum(r2, params, P).total
    assert s1.min() >= -1e-12 * np.abs(s1).max()
    mix = model_spectrum(0.3 * r1 + 0.7 * r2, params, P).total
    np.testing.assert_allclose(mix, 0.3 * s1 + 0.7 * s2, atol=1e-13 * np.abs(mix).max())


@settings(max_examples=40, deadline=None)
@given(params_st)
def test_suppression_and_momentum(params):
    n = params.n_levels
    for i in range(n):
        assert suppression(params, i, i) == 1.0
        for j in range(n):
            assert 0 <= suppression(params, i, j) <= 1  # may underflow for distant levels
            assert suppression(params, i, j) == pytest.approx(suppression(params, j, i))
            assert fringe_wavenumber(params, i, j) == pytest.approx(-fringe_wavenumber(params, j, i))
            p = params.momentum(i, j)
            assert params.detuning(p, i, j) == pytest.approx(0.0, abs=1e-12)


def test_peak_positions_of_two_level_reference():
    assert characteristic_momentum(2.0, 0.49981, 0.49981) == pytest.approx(1.7321, abs=1e-4)
    assert characteristic_momentum(2.0, 0.12495, 0.12495) == pytest.approx(1.9365, abs=1e-4)
    assert characteristic_momentum(2.0, 0.49981, 0.12495) == pytest.approx(1.8371, abs=1e-4)
    with pytest.raises(ValueError):
        characteristic_momentum(0.1, 0.5, 0.5)


def test_no_fringes_without_thz():
    params = PeakModelParams(2.0, 87.8, 0.0, IPS)
    assert all(fringe_wavenumber(params, i, j) == 0 for i in range(4) for j in range(4))
    bas = basis(params, P)
    assert np.max(np.abs(bas.imag)) < 1e-14 * np.abs(bas).max()


@pytest.mark.parametrize("alpha", [-0.001, 0.0006])
def test_coherence_term_follows_phase_law(alpha):
    params = PeakModelParams(2.0, 87.8, alpha, (0.49981, 0.12495))
    p_eg = params.momentum(0, 1)
    p = p_eg + np.linspace(-0.004, 0.004, 41)
    for phi in (0.0, 0.7, 2.0):
        rho = np.array([[0.5, 0.5 * np.exp(-1j * phi)], [0.5 * np.exp(1j * phi), 0.5]])
        coh = model_spectrum(rho, params, p).w_coh
        law = np.cos(fringe_phase_law(params, 0, 1, p, 0.0, phi_i=phi, phi_j=0.0))
        envelope = model_spectrum(np.array([[0, 0.5], [0.5, 0]]), params, p_eg).w_coh[0]
        np.testing.assert_allclose(coh, envelope * law, rtol=0, atol=0.05 * abs(envelope))


def test_relative_phase_convention():
    params = PeakModelParams(2.0, 87.8, 0.0, (0.5, 0.125))
    assert relative_phase(params, 0, 1, 10.0, 0.3, 0.1, t0=4.0) == pytest.approx(0.375 * 6.0 + 0.2)


def test_model_spectrogram_matches_spectrum():
    params = PeakModelParams(2.0, 87.8, -0.001, IPS, cubic_correction=True)
    rng = np.random.default_rng(0)
    rho = np.stack([random_rho(rng) for _ in range(3)])
    dens = DensityMatrixSeries(np.arange(3.0), rho)
    w = model_spectrogram(dens, params, P)
    for k in range(3):
        np.testing.assert_allclose(w[k], model_spectrum(rho[k], params, P).signal, rtol=1e-12)


def test_peak_table_rows():
    params = PeakModelParams(2.0, 87.8, -0.0006, IPS)
    rows = peak_table(params)
    assert len(rows) == 10
    assert [r.momentum for r in rows] == sorted(r.momentum for r in rows)
    text = format_peak_table(params, ["g", "e1", "e2", "e3"], ["seed = 1"])
    lines = text.splitlines()
    assert lines[0] == "# seed = 1" and lines[1].startswith("i\tj\tp_ij")
    assert len(lines) == 12


def test_parameter_validation():
    with pytest.raises(ConfigError):
        PeakModelParams(2.0, -1.0, 0.0, IPS)
    with pytest.raises(ConfigError):
        PeakModelParams(2.0, 80.0, 0.0, IPS, level_widths=(0.1,))
    assert PeakModelParams(2.0, 80.0, 0.0, IPS, level_widths=(0, 0, 0, 0)).level_widths is None


def test_level_widths_reduce_to_plain_model_for_tiny_rates():
    plain = PeakModelParams(2.0, 87.8, -0.0006, IPS)
    tiny = PeakModelParams(2.0, 87.8, -0.0006, IPS, level_widths=(0, 0, 1e-9, 1e-9))
    np.testing.assert_allclose(basis(tiny, P), basis(plain, P), rtol=1e-5, atol=1e-12)
