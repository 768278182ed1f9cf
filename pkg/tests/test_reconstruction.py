import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from thzrecon.dynamics import DensityMatrixSeries
from thzrecon.exceptions import ConfigError, CoverageError, FitError, UnderResolvedGridError
from thzrecon.model import PeakModelParams, model_spectrogram
from thzrecon.reconstruction import (
    DensityMatrixReconstructor,
    PhaseReadout,
    extract_coherences,
    extract_phase,
    extract_populations,
    read_density_tsv,
    reconstruct,
    write_density_tsv,
)
from thzrecon.sfa import Spectrogram

IPS = (0.5, 0.29, 0.18, 0.06)
TWO_IPS = (0.49981, 0.12495)
SIGMA = 87.78
P4 = np.round(np.arange(1.65, 2.05 + 1e-9, 0.001), 10)


def free_density(rho0, ips, tau, labels=None):
    """rho_ij(tau) = rho_ij(0) exp(i (E_i - E_j) tau) with E = -Ip."""
    e = -np.asarray(ips)
    ph = np.exp(1j * (e[:, None] - e[None, :])[None] * np.asarray(tau)[:, None, None])
    return DensityMatrixSeries(np.asarray(tau, dtype=float), rho0[None] * ph, labels=labels)


def model_pair(density, params, p):
    """Noiseless THz-off and THz-on spectrograms of ``density``."""
    meta = dict(xuv_e0=params.e0, xuv_omega=params.omega, xuv_sigma=params.sigma)
    off_params = params.with_alpha(0.0)
    off = Spectrogram(p, density.tau, model_spectrogram(density, off_params, p), dict(meta, thz_on=False, alpha=0.0))
    on = Spectrogram(p, density.tau, model_spectrogram(density, params, p), dict(meta, thz_on=True, alpha=params.alpha))
    return off, on


def mixed_state(seed, n=4):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    rho = v.conj() @ v.T
    return rho / np.trace(rho).real


@pytest.fixture(scope="module")
def four_level_case():
    params = PeakModelParams(2.0, SIGMA, -0.0006, IPS, e0=0.005, cubic_correction=True,
                             level_widths=(0, 0, 0.0035, 0.0035))
    density = free_density(mixed_state(0), IPS, np.arange(0.0, 120.0, 2.0), labels=("g", "e1", "e2", "e3"))
    return params, density, *model_pair(density, params, P4)


def test_noiseless_round_trip_four_level(four_level_case):
    params, density, off, on = four_level_case
    res = reconstruct(off, on, params, labels=density.labels)
    assert np.max(np.abs(res.density.rho - density.rho)) < 1e-9
    assert res.flags == [] and res.coherences.skipped == []
    json.loads(res.to_audit_json())


def test_point_readout_is_approximate(four_level_case):
    params, density, off, on = four_level_case
    res = reconstruct(off, on, params, readout="point")
    err = np.abs(res.density.rho - density.rho)
    np.testing.assert_allclose(np.einsum("tii->ti", err), 0, atol=1e-9)
    assert np.max(err) < 0.05


def test_hilbert_imaginary_part(four_level_case):
    params, density, off, on = four_level_case
    fine = free_density(density.rho[0], IPS, np.arange(0.0, 400.0, 0.5))
    off, on = model_pair(fine, params, P4)
    res = reconstruct(off, on, params, pairs=[(0, 1)], im_method="hilbert")
    inner = slice(100, -100)  # Hilbert transforms ring at the edges
    err = np.abs(res.density.rho[inner, 0, 1].imag - fine.rho[inner, 0, 1].imag)
    # an approximation, unlike the fitted imaginary part
    assert np.max(err) < 0.05 * np.abs(fine.rho[0, 0, 1])


@settings(max_examples=15, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.1, 0.9))
def test_phase_readout_recovers_prepared_phase(phi, pop):
    params = PeakModelParams(2.0, SIGMA, -0.001, TWO_IPS, e0=0.005, cubic_correction=True)
    c = np.array([np.sqrt(pop), np.sqrt(1 - pop) * np.exp(1j * phi)])
    rho = np.outer(c.conj(), c)
    p = np.round(np.arange(1.6, 2.1, 0.001), 10)
    _, on = model_pair(DensityMatrixSeries(np.array([0.0]), rho[None]), params, p)
    res = extract_phase(on, 0.0, (1, 0), params)
    # phi_eg = phi_e - phi_g
    assert np.angle(np.exp(1j * (res.phi - phi))) == pytest.approx(0.0, abs=1e-6)
    assert res.amplitude == pytest.approx(np.sqrt(pop * (1 - pop)), rel=1e-6)


def test_phase_readout_errors():
    params = PeakModelParams(2.0, SIGMA, -0.001, TWO_IPS, e0=0.005)
    p = np.round(np.arange(1.6, 2.1, 0.001), 10)
    _, on = model_pair(DensityMatrixSeries(np.array([0.0]), np.diag([0.5, 0.5])[None].astype(complex)), params, p)
    with pytest.raises(FitError):
        extract_phase(on, 0.0, (1, 0), params)
    coarse = Spectrogram(p[::20], on.tau, on.w[:, ::20], on.metadata)
    with pytest.raises(UnderResolvedGridError):
        extract_phase(coarse, 0.0, (1, 0), params)
    with pytest.raises(CoverageError):
        extract_phase(on, 5.0, (1, 0), params)


def test_population_pass_guards(four_level_case):
    params, density, off, on = four_level_case
    with pytest.raises(ConfigError):
        extract_populations(on, params)
    pops = extract_populations(off, params, calibration="self", reference_tau=density.tau[3])
    assert pops[3].sum() == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        extract_populations(off, params, calibration="magic")
    narrow = Spectrogram(P4[:100], off.tau, off.w[:, :100], off.metadata)
    with pytest.raises(CoverageError):
        extract_populations(narrow, params)


def test_unresolvable_lines_raise_fit_error():
    params = PeakModelParams(2.0, 0.5, 0.0, IPS, e0=0.005)  # sub-cycle pulse: lines merge
    density = free_density(mixed_state(1), IPS, [0.0])
    off, _ = model_pair(density, params, P4)
    with pytest.raises(FitError):
        extract_populations(off, params)


def test_suppressed_pair_is_rejected(four_level_case):
    params, density, off, on = four_level_case
    pops = extract_populations(off, params)
    with pytest.raises(FitError):
        extract_coherences(on, pops, params, pairs=[(0, 3)], suppression_floor=0.5)
    res = extract_coherences(on, pops, params, suppression_floor=0.5)
    assert (0, 3) in res.skipped


def test_estimators_match_functions(four_level_case):
    params, density, off, on = four_level_case
    est = DensityMatrixReconstructor(ionization_potentials=IPS, level_widths=(0, 0, 0.0035, 0.0035))
    out = est.fit(off).transform(on)
    assert np.max(np.abs(out.rho - density.rho)) < 1e-9
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "populations_")
    readout = PhaseReadout(pair=(2, 1), ionization_potentials=IPS)
    phis = readout.fit(on).transform(density.tau[:2])
    assert phis.shape == (2,)


def test_estimator_requires_potentials(four_level_case):
    _, _, off, _ = four_level_case
    with pytest.raises(ConfigError):
        DensityMatrixReconstructor().fit(off)


def test_density_tsv_round_trip(tmp_path, four_level_case):
    _, density, _, _ = four_level_case
    path = tmp_path / "rho.tsv"
    write_density_tsv(path, density, time_origin=10.0, header_lines=["seed = 3"])
    back = read_density_tsv(path)
    assert back.labels == density.labels
    assert np.array_equal(back.rho, density.rho)
    np.testing.assert_allclose(back.tau, density.tau, atol=1e-12)
    assert path.read_text().startswith("# seed = 3\n")
