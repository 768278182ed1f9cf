import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from thzrecon.dynamics import (
    CouplingPulse,
    JumpChannel,
    LevelSystem,
    TrajectoryEnsemble,
    ensemble_density_matrix,
    grid_indices,
    lindblad_propagate,
    propagate_mcwf,
    propagate_schrodinger,
    simulate_ensemble,
    uniform_grid,
)
from thzrecon.exceptions import ConfigError, CoverageError, UnderResolvedGridError

FOUR_E = (-0.5, -0.29, -0.18, -0.06)


def four_level(t0=0.0):
    return LevelSystem(
        FOUR_E, (1, 0, 0, 0), t0=t0, labels=("g", "e1", "e2", "e3"),
        couplings=(CouplingPulse(0.02, t0 + 100, 60, 0.324), CouplingPulse(0.04, t0 + 200, 60, 0.112)),
        channels=(JumpChannel(2, 1, 0.007), JumpChannel(3, 1, 0.007)),
    )


def test_free_evolution_phase():
    system = LevelSystem.from_populations((-0.5, -0.125), (0.3, 0.7), (0.2, -1.1), t0=5.0)
    t = uniform_grid(-20.0, 60.0, 0.05)
    traj = propagate_schrodinger(system, t)
    c0 = np.asarray(system.initial_amplitudes)
    exact = c0[None, :] * np.exp(-1j * np.asarray(system.energies)[None, :] * (t[:, None] - 5.0))
    np.testing.assert_allclose(traj.amplitudes, exact, atol=1e-12)
    rho = ensemble_density_matrix(traj)
    # rho_ij = conj(c_i) c_j rotates as exp(+i (E_i - E_j) (t - t0))
    expect = np.conj(exact[:, 0]) * exact[:, 1]
    np.testing.assert_allclose(rho.rho[:, 0, 1], expect, atol=1e-12)


def test_rabi_oscillation_matches_rotating_wave():
    gap = 0.3
    amp = 0.002
    system = LevelSystem(
        (-0.5, -0.2), (1, 0), couplings=(CouplingPulse(amp, frequency=gap, phase=np.pi / 2),)
    )
    t_pi = np.pi / amp
    t = uniform_grid(0.0, t_pi, 0.1)
    pops = propagate_schrodinger(system, t).populations()
    # W(t) = amp cos(gap t) on the off-diagonal: Rabi frequency amp
    np.testing.assert_allclose(pops[:, 1], np.sin(amp * t / 2) ** 2, atol=0.01)
    assert pops[-1, 1] > 0.99


def test_split_step_matches_ode_solver():
    system = four_level()
    system = LevelSystem(system.energies, (0.6, 0.8j, 0, 0), couplings=system.couplings)
    t = uniform_grid(0.0, 400.0, 0.05)
    traj = propagate_schrodinger(system, t)

    def rhs(tt, c):
        return -1j * system.hamiltonian(tt) @ c

    sol = solve_ivp(rhs, (0, 400), np.asarray(system.initial_amplitudes), t_eval=t[::400],
                    method="DOP853", rtol=1e-11, atol=1e-12, max_step=0.5)
    np.testing.assert_allclose(traj.amplitudes[::400], sol.y.T, atol=2e-4)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=8, max_size=8))
def test_unitary_propagation_conserves_norm(xs):
    c = np.array(xs[:4]) + 1j * np.array(xs[4:])
    if np.linalg.norm(c) < 1e-3:
        c = np.array([1, 0, 0, 0], dtype=complex)
    c = c / np.linalg.norm(c)
    system = LevelSystem(FOUR_E, tuple(c), t0=100.0, couplings=four_level().couplings)
    traj = propagate_schrodinger(system, uniform_grid(0.0, 300.0, 0.1))
    np.testing.assert_allclose(traj.norm(), 1.0, atol=1e-12)


def test_backward_propagation_returns_to_initial_state():
    system = LevelSystem((-0.5, -0.2), (0.6, 0.8), t0=50.0, couplings=(CouplingPulse(0.01, 40.0, 10.0, 0.3),))
    t = uniform_grid(0.0, 100.0, 0.1)
    traj = propagate_schrodinger(system, t)
    again = LevelSystem(system.energies, tuple(traj.amplitudes[0]), t0=0.0, couplings=system.couplings)
    forward = propagate_schrodinger(again, t)
    np.testing.assert_allclose(forward.amplitudes[500], system.initial_amplitudes, atol=1e-10)


def test_resolution_guard():
    with pytest.raises(UnderResolvedGridError):
        propagate_schrodinger(LevelSystem((-2.0, -1.0), (1, 0)), uniform_grid(0, 10, 0.1))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(energies=(-0.5, 0.1), initial_amplitudes=(1, 0)),
        dict(energies=(-0.5, -0.1), initial_amplitudes=(1, 1)),
        dict(energies=(-0.5, -0.1), initial_amplitudes=(1, 0), channels=(JumpChannel(0, 5, 0.1),)),
        dict(energies=(-0.5, -0.1), initial_amplitudes=(1, 0), labels=("a", "a")),
    ],
)
def test_level_system_validation(kwargs):
    with pytest.raises(ConfigError):
        LevelSystem(**kwargs)


def test_exponential_decay_oracle():
    rate = 0.01
    system = LevelSystem((-0.5, -0.2), (0, 1), channels=(JumpChannel(1, 0, rate),))
    t = uniform_grid(0.0, 200.0, 0.1)
    lind = lindblad_propagate(system, t[::100])
    np.testing.assert_allclose(lind.populations()[:, 1], np.exp(-rate * t[::100]), atol=1e-8)
    n = 2000
    ens = simulate_ensemble(system, t, n, seed=7, store_every=100)
    mc = ensemble_density_matrix(ens).populations()[:, 1]
    assert np.max(np.abs(mc - np.exp(-rate * ens.t))) < 3 / np.sqrt(n)


def test_lindblad_invariants():
    system = four_level()
    rho = lindblad_propagate(system, np.arange(0.0, 600.0, 5.0))
    rho.check(trace_tol=1e-7)
    eig = np.linalg.eigvalsh(rho.rho)
    assert eig.min() > -1e-8


def test_mcwf_agrees_with_lindblad_on_small_ensemble():
    system = four_level()
    t = uniform_grid(0.0, 500.0, 0.1)
    ens = simulate_ensemble(system, t, 400, seed=3, store_every=50)
    mc = ensemble_density_matrix(ens)
    lind = lindblad_propagate(system, ens.t)
    assert np.max(np.abs(mc.rho - lind.rho)) < 3 / np.sqrt(400) + 0.02


def test_ensemble_is_deterministic_and_layout_invariant(tmp_path):
    system = four_level()
    t = uniform_grid(0.0, 400.0, 0.1)
    a = simulate_ensemble(system, t, 12, seed=11, store_every=10)
    b = simulate_ensemble(system, t, 12, seed=11, store_every=10, batch_size=5, n_jobs=3)
    c = simulate_ensemble(system, t, 12, seed=12, store_every=10)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert a.jumps == b.jumps
    assert not np.array_equal(a.amplitudes, c.amplitudes)
    # trajectory s does not depend on how many others are drawn
    d = simulate_ensemble(system, t, 4, seed=11, store_every=10)
    assert np.array_equal(a.amplitudes[:4], d.amplitudes)
    a.save(tmp_path / "a.npz")
    b.save(tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    loaded = TrajectoryEnsemble.load(tmp_path / "a.npz")
    assert np.array_equal(loaded.amplitudes, a.amplitudes)
    assert loaded.jumps == a.jumps and loaded.seed == 11 and loaded.labels == system.labels


def test_single_trajectory_matches_ensemble_member():
    system = four_level()
    t = uniform_grid(0.0, 300.0, 0.1)
    ens = simulate_ensemble(system, t, 3, seed=5)
    seeds = np.random.SeedSequence(5).spawn(3)
    one = propagate_mcwf(system, t, seeds[2])
    assert np.array_equal(one.amplitudes, ens.amplitudes[2])


def test_transfer_rule_keeps_spectator_amplitude():
    system = LevelSystem((-0.5, -0.3, -0.1), (0.6, 0, 0.8), channels=(JumpChannel(2, 1, 0.05),))
    t = uniform_grid(0.0, 200.0, 0.1)
    for s in range(20):
        tr = propagate_mcwf(system, t, s, jump_rule="transfer")
        np.testing.assert_allclose(tr.norm(), 1.0, atol=1e-12)
        if tr.jumps:
            k = tr.jumps[0].step + 1
            assert abs(tr.amplitudes[k, 0]) > 0.1
            assert abs(tr.amplitudes[k, 2]) < 1e-12
            break
    else:
        pytest.fail("no jump in 20 trajectories")


def test_mcwf_requires_start_at_t0():
    system = four_level(t0=10.0)
    with pytest.raises(ConfigError):
        simulate_ensemble(system, uniform_grid(0.0, 50.0, 0.1), 2, seed=1)


def test_grid_indices_rejects_off_grid():
    t = uniform_grid(0.0, 10.0, 0.1)
    assert grid_indices(t, [0.0, 5.0]).tolist() == [0, 50]
    with pytest.raises(CoverageError):
        grid_indices(t, [0.05])
    with pytest.raises(CoverageError):
        grid_indices(t, [11.0])
