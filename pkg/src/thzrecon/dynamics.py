"""Bound-state dynamics of a driven multilevel system.

Three propagators share one Hamiltonian ``H(t) = diag(E) + W(t) J``:

* :func:`propagate_schrodinger` -- deterministic, unitary split-step evolution;
* :func:`propagate_mcwf` / :func:`simulate_ensemble` -- Monte Carlo wave function
  (quantum jump) trajectories;
* :func:`lindblad_propagate` -- the master equation, integrated with an
  adaptive Runge-Kutta scheme as an independent oracle for the ensemble.

Amplitudes are always Schroedinger-picture amplitudes, so with ``W = 0`` they
rotate as ``c_i(t) = c_i(t0) exp(-i E_i (t - t0))``. Density matrices follow the
convention ``rho_ij = conj(c_i) c_j``.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import solve_ivp

from .exceptions import ConfigError, CoverageError, UnderResolvedGridError

RESOLUTION_LIMIT = 0.1


@dataclass(frozen=True)
class CouplingPulse:
    """One term ``amplitude * exp(-(t-center)^2/width^2) * sin(frequency*t + phase)``.

    ``width=None`` drops the Gaussian window (a constant-envelope term).
    """

    amplitude: float
    center: float = 0.0
    width: float | None = None
    frequency: float = 0.0
    phase: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.amplitude * np.sin(self.frequency * t + self.phase)
        if self.width is not None:
            out = out * np.exp(-((t - self.center) ** 2) / self.width**2)
        return out


@dataclass(frozen=True)
class JumpChannel:
    source: int
    target: int
    rate: float


@dataclass(frozen=True)
class JumpRecord:
    step: int
    time: float
    source: int
    target: int
    phase: float


@dataclass(frozen=True)
class LevelSystem:
    """Energies, couplings, decay channels and initial state of the bound system."""

    energies: tuple[float, ...]
    initial_amplitudes: tuple[complex, ...]
    t0: float = 0.0
    labels: tuple[str, ...] | None = None
    couplings: tuple[CouplingPulse, ...] = ()
    channels: tuple[JumpChannel, ...] = ()
    coupling_pattern: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        amps = tuple(complex(c) for c in self.initial_amplitudes)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "initial_amplitudes", amps)
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "channels", tuple(self.channels))
        n = len(energies)
        if n == 0:
            raise ConfigError("level system needs at least one level")
        if len(amps) != n:
            raise ConfigError(f"{len(amps)} initial amplitudes for {n} levels")
        if any(e >= 0 for e in energies):
            raise ConfigError("bound levels need E_i < 0 (positive ionization potential)")
        norm = sum(abs(c) ** 2 for c in amps)
        if abs(norm - 1.0) > 1e-12:
            raise ConfigError(f"initial state norm is {norm!r}, expected 1")
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(f"{i}" for i in range(n)))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != n or len(set(self.labels)) != n:
                raise ConfigError("labels must be unique, one per level")
        for ch in self.channels:
            if not (0 <= ch.source < n and 0 <= ch.target < n):
                raise ConfigError(f"jump channel {ch} references a missing level")
            if ch.source == ch.target:
                raise ConfigError("jump channels must connect distinct levels")
            if ch.rate < 0:
                raise ConfigError(f"negative decay rate {ch.rate}")
        pattern = self.pattern
        if pattern.shape != (n, n) or not np.allclose(pattern, pattern.T):
            raise ConfigError("coupling pattern must be a real symmetric n x n matrix")

    @classmethod
    def from_populations(cls, energies, populations, phases=None, **kwargs) -> "LevelSystem":
        """Build from level populations and initial phases at ``t0``."""
        pops = np.asarray(populations, dtype=float)
        if np.any(pops < 0):
            raise ConfigError("populations must be non-negative")
        total = pops.sum()
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"populations sum to {total}, expected 1")
        pops = pops / total
        ph = np.zeros_like(pops) if phases is None else np.asarray(phases, dtype=float)
        amps = np.sqrt(pops) * np.exp(1j * ph)
        return cls(energies=tuple(energies), initial_amplitudes=tuple(amps), **kwargs)

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def ionization_potentials(self) -> np.ndarray:
        return -np.asarray(self.energies)

    @property
    def pattern(self) -> np.ndarray:
        if self.coupling_pattern is None:
            n = len(self.energies)
            return np.ones((n, n)) - np.eye(n)
        return np.asarray(self.coupling_pattern, dtype=float)

    @property
    def max_carrier(self) -> float:
        return max((abs(c.frequency) for c in self.couplings), default=0.0)

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        return self.labels.index(label)

    def coupling(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c in self.couplings:
            out = out + c(t)
        return out

    def hamiltonian(self, t) -> np.ndarray:
        return np.diag(self.energies).astype(complex) + float(self.coupling(t)) * self.pattern

    def source_rates(self) -> np.ndarray:
        rates = np.zeros(self.n_levels)
        for ch in self.channels:
            rates[ch.source] += ch.rate
        return rates

    @property
    def has_decay(self) -> bool:
        return any(ch.rate > 0 for ch in self.channels)


def uniform_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Uniform grid from ``start`` to (at least) ``stop`` with spacing ``step``."""
    if step <= 0:
        raise ConfigError("grid step must be positive")
    n = int(np.ceil((stop - start) / step - 1e-9)) + 1
    return start + step * np.arange(n)


def grid_step(grid) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ConfigError("time grid needs at least two points")
    steps = np.diff(grid)
    dt = float(steps.mean())
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(grid).max()):
        raise ConfigError("time grid must be uniform and increasing")
    return dt


def check_resolution(system: LevelSystem, dt: float):
    fastest = max(max(abs(e) for e in system.energies), system.max_carrier)
    if dt * fastest >= RESOLUTION_LIMIT:
        raise UnderResolvedGridError(
            f"dt={dt:g} with fastest frequency {fastest:g} gives dt*omega={dt * fastest:.3g} "
            f"(needs < {RESOLUTION_LIMIT})"
        )


@dataclass
class WaveTrajectory:
    t: np.ndarray
    amplitudes: np.ndarray  # (n_t, n_levels)
    jumps: tuple[JumpRecord, ...] = ()

    @property
    def dt(self) -> float:
        return grid_step(self.t)

    def norm(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class TrajectoryEnsemble:
    t: np.ndarray
    amplitudes: np.ndarray  # (n_traj, n_t, n_levels)
    jumps: list[tuple[JumpRecord, ...]]
    seed: int | None = None
    labels: tuple[str, ...] | None = None
    energies: tuple[float, ...] | None = None

    def __len__(self):
        return self.amplitudes.shape[0]

    def __getitem__(self, s) -> WaveTrajectory:
        return WaveTrajectory(self.t, self.amplitudes[s], self.jumps[s])

    def __iter__(self):
        return (self[s] for s in range(len(self)))

    @property
    def dt(self) -> float:
        return grid_step(self.t)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[WaveTrajectory], **kwargs) -> "TrajectoryEnsemble":
        if not trajectories:
            raise ValueError("empty ensemble")
        t = trajectories[0].t
        for tr in trajectories[1:]:
            if tr.t.shape != t.shape or not np.array_equal(tr.t, t):
                raise ValueError("trajectories must share one time grid")
        amps = np.stack([tr.amplitudes for tr in trajectories])
        return cls(t, amps, [tuple(tr.jumps) for tr in trajectories], **kwargs)

    def save(self, path, extra: dict | None = None):
        """Write a deterministic ``.npz`` archive (see README for the layout).

        Args:
            path: Target file.
            extra: Additional named arrays stored alongside (ignored by ``load``).
        """
        jumps = np.array(
            [(s, j.step, j.time, j.source, j.target, j.phase) for s, js in enumerate(self.jumps) for j in js],
            dtype=float,
        ).reshape(-1, 6)
        arrays = {
            "t": self.t,
            "amplitudes": self.amplitudes,
            "jumps": jumps,
            "seed": np.array([-1 if self.seed is None else self.seed], dtype=np.int64),
            "labels": np.array(list(self.labels or ()), dtype="U32"),
            "energies": np.array(list(self.energies or ()), dtype=float),
        }
        arrays.update(extra or {})
        write_npz(path, arrays)

    @classmethod
    def load(cls, path) -> "TrajectoryEnsemble":
        with np.load(path) as data:
            t = data["t"]
            amps = data["amplitudes"]
            table = data["jumps"]
            seed = int(data["seed"][0])
            labels = tuple(str(x) for x in data["labels"]) or None
            energies = tuple(float(x) for x in data["energies"]) or None
        jumps: list[list[JumpRecord]] = [[] for _ in range(amps.shape[0])]
        for s, step, time, src, tgt, phase in table:
            jumps[int(s)].append(JumpRecord(int(step), float(time), int(src), int(tgt), float(phase)))
        return cls(t, amps, [tuple(j) for j in jumps], None if seed < 0 else seed, labels, energies)


def write_npz(path, arrays: dict):
    # np.savez stamps the wall-clock time into the zip entries; fixed stamps keep
    # archives byte-identical between runs.
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


@dataclass
class DensityMatrixSeries:
    tau: np.ndarray
    rho: np.ndarray  # (n_tau, n, n), rho_ij = conj(c_i) c_j
    provenance: str = "ensemble-truth"
    labels: tuple[str, ...] | None = None
    diagnostics: dict = field(default_factory=dict)

    PROVENANCES = ("ensemble-truth", "lindblad-oracle", "reconstructed", "prescribed")

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim != 3 or self.rho.shape[0] != self.tau.size or self.rho.shape[1] != self.rho.shape[2]:
            raise ValueError("rho must have shape (n_tau, n, n) matching tau")
        if self.provenance not in self.PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def n_levels(self) -> int:
        return self.rho.shape[1]

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rho))

    def element(self, i: int, j: int) -> np.ndarray:
        return self.rho[:, i, j]

    def trace(self) -> np.ndarray:
        return np.real(np.einsum("tii->t", self.rho))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - np.conj(np.transpose(self.rho, (0, 2, 1))))))

    def at(self, tau: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.tau - tau)))
        if abs(self.tau[k] - tau) > 1e-9 * max(1.0, abs(tau)):
            raise CoverageError(f"delay {tau} not on the density-matrix grid")
        return self.rho[k]

    def check(self, trace_tol=1e-8, herm_tol=1e-10):
        """Raise if a truth/oracle series violates trace, Hermiticity or diagonal bounds."""
        if self.hermiticity_error() > herm_tol:
            raise ValueError(f"rho not Hermitian (err {self.hermiticity_error():.2e})")
        if np.max(np.abs(self.trace() - 1.0)) > trace_tol:
            raise ValueError("trace(rho) deviates from 1")
        pops = self.populations()
        if pops.min() < -trace_tol or pops.max() > 1.0 + trace_tol:
            raise ValueError("populations outside [0, 1]")


class _SplitStepper:
    """Strang splitting: exact diagonal half steps around an exact coupling step.

    The coupling step exponentiates ``W(t_mid) J`` through the fixed
    eigenbasis of the pattern ``J``. Small matrix products are written as
    explicit elementwise sums so each row of a batch is computed identically
    whatever the batch size.
    """

    def __init__(self, system: LevelSystem, t: np.ndarray, damping: bool):
        self.dt = grid_step(t)
        check_resolution(system, self.dt)
        self.energies = np.asarray(system.energies)
        self.gamma = system.source_rates() if damping else np.zeros(system.n_levels)
        lam, vec = np.linalg.eigh(system.pattern)
        self.lam = lam
        self.vec = vec.astype(complex)
        self.vec_t = vec.T.astype(complex)
        self.w_mid = system.coupling(t[:-1] + 0.5 * self.dt)

    def _mat(self, psi, m):
        return (psi[:, :, None] * m[None, :, :]).sum(axis=1)

    def step(self, psi: np.ndarray, n: int, forward: bool = True) -> np.ndarray:
        dt = self.dt if forward else -self.dt
        half = np.exp(-0.5j * self.energies * dt - 0.25 * self.gamma * abs(dt))
        psi = psi * half
        phase = np.exp(-1j * self.w_mid[n] * self.lam * dt)
        psi = self._mat(self._mat(psi, self.vec) * phase, self.vec_t)
        return psi * half


def _t0_index(system: LevelSystem, t: np.ndarray) -> int:
    dt = grid_step(t)
    k = int(round((system.t0 - t[0]) / dt))
    if k < 0 or k >= t.size or abs(t[k] - system.t0) > 1e-9 * max(1.0, abs(system.t0)) + 1e-12:
        raise ConfigError(f"t0={system.t0} is not a point of the time grid")
    return k


def propagate_schrodinger(system: LevelSystem, grid) -> WaveTrajectory:
    """Unitary evolution of the initial amplitudes over ``grid``.

    ``t0`` must be a grid point; the grid may extend before it, in which case
    the state is propagated backwards from ``t0`` as well.
    """
    t = np.asarray(grid, dtype=float)
    stepper = _SplitStepper(system, t, damping=False)
    k0 = _t0_index(system, t)
    out = np.empty((t.size, system.n_levels), dtype=complex)
    psi = np.asarray(system.initial_amplitudes, dtype=complex)[None, :]
    out[k0] = psi[0]
    for n in range(k0, t.size - 1):
        psi = stepper.step(psi, n)
        out[n + 1] = psi[0]
    psi = out[k0][None, :]
    for n in range(k0 - 1, -1, -1):
        psi = stepper.step(psi, n, forward=False)
        out[n] = psi[0]
    return WaveTrajectory(t, out)


def _child_seeds(seed, n):
    return np.random.SeedSequence(seed).spawn(n)


def _mcwf_batch(system, t, seeds, store_every, jump_rule):
    stepper = _SplitStepper(system, t, damping=True)
    n_steps = t.size - 1
    channels = [ch for ch in system.channels if ch.rate > 0]
    max_rate = max(ch.rate for ch in channels)
    if max_rate * stepper.dt > RESOLUTION_LIMIT:
        raise UnderResolvedGridError(
            f"Gamma*dt = {max_rate * stepper.dt:.3g} exceeds {RESOLUTION_LIMIT}; jump probability not first order"
        )
    b = len(seeds)
    eps = np.empty((b, n_steps, len(channels)))
    phases = np.empty((b, n_steps))
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        eps[r] = rng.random((n_steps, len(channels)))
        phases[r] = rng.uniform(0.0, 2.0 * np.pi, n_steps)
    stored = np.arange(0, t.size, store_every)
    out = np.empty((b, stored.size, system.n_levels), dtype=complex)
    psi = np.tile(np.asarray(system.initial_amplitudes, dtype=complex), (b, 1))
    out[:, 0] = psi
    jumps: list[list[JumpRecord]] = [[] for _ in range(b)]
    slot = 1
    dt = stepper.dt
    for n in range(n_steps):
        pops = psi.real**2 + psi.imag**2
        pending = np.ones(b, dtype=bool)
        for m, ch in enumerate(channels):
            fire = pending & (ch.rate * pops[:, ch.source] * dt > eps[:, n, m])
            if not fire.any():
                continue
            pending &= ~fire
            rows = np.nonzero(fire)[0]
            ph = np.exp(1j * phases[rows, n])
            if jump_rule == "collapse":
                psi[rows] = 0.0
                psi[rows, ch.target] = ph
            else:
                moved = pops[rows, ch.source] + pops[rows, ch.target]
                psi[rows, ch.source] = 0.0
                psi[rows, ch.target] = np.sqrt(moved) * ph
            for r in rows:
                jumps[r].append(JumpRecord(n, float(t[n]), ch.source, ch.target, float(phases[r, n])))
        psi = stepper.step(psi, n)
        psi = psi / np.sqrt((psi.real**2 + psi.imag**2).sum(axis=1))[:, None]
        if (n + 1) % store_every == 0:
            out[:, slot] = psi
            slot += 1
    return out, [tuple(j) for j in jumps]


def propagate_mcwf(
    system: LevelSystem, grid, seed, store_every: int = 1, jump_rule: str = "collapse"
) -> WaveTrajectory:
    """One quantum-jump trajectory.

    At every step each channel draws ``eps ~ U[0, 1)`` and fires when
    ``rate * |c_source|^2 * dt > eps`` (first channel wins if several fire).
    Between jumps the source levels are damped by the non-Hermitian term and
    the state is renormalized.

    Args:
        system: Level system; ``t0`` must equal the first grid point.
        grid: Uniform time grid.
        seed: Integer or ``numpy.random.SeedSequence`` for this trajectory.
        store_every: Keep every k-th grid point in the returned trajectory.
        jump_rule: ``"collapse"`` projects onto the target level (the standard
            rule, equivalent to the Lindblad equation); ``"transfer"`` moves
            only the source population to the target and keeps the other
            components.

    Returns:
        WaveTrajectory on ``grid[::store_every]`` with its jump records.
    """
    t = np.asarray(grid, dtype=float)
    if jump_rule not in ("collapse", "transfer"):
        raise ValueError(f"unknown jump rule {jump_rule!r}")
    if _t0_index(system, t) != 0:
        raise ConfigError("MCWF trajectories start at t0: grid[0] must equal t0")
    if not system.has_decay:
        traj = propagate_schrodinger(system, t)
        return WaveTrajectory(t[::store_every], traj.amplitudes[::store_every])
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    amps, jumps = _mcwf_batch(system, t, [ss], store_every, jump_rule)
    return WaveTrajectory(t[::store_every], amps[0], jumps[0])


def simulate_ensemble(
    system: LevelSystem,
    grid,
    n_trajectories: int,
    seed: int,
    store_every: int = 1,
    batch_size: int = 64,
    n_jobs: int = 1,
    jump_rule: str = "collapse",
) -> TrajectoryEnsemble:
    """Ensemble of MCWF trajectories with sub-seeds spawned from ``seed``.

    Trajectory ``s`` depends only on its own sub-seed, so the result does not
    depend on ``batch_size`` or ``n_jobs``.
    """
    if n_trajectories < 1:
        raise ConfigError("ensemble needs at least one trajectory")
    t = np.asarray(grid, dtype=float)
    meta = dict(seed=seed, labels=system.labels, energies=system.energies)
    if not system.has_decay:
        traj = propagate_mcwf(system, t, seed, store_every=store_every)
        amps = np.repeat(traj.amplitudes[None], n_trajectories, axis=0)
        return TrajectoryEnsemble(traj.t, amps, [()] * n_trajectories, **meta)
    if _t0_index(system, t) != 0:
        raise ConfigError("MCWF trajectories start at t0: grid[0] must equal t0")
    seeds = _child_seeds(seed, n_trajectories)
    batches = [seeds[i : i + batch_size] for i in range(0, n_trajectories, batch_size)]
    results = Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(_mcwf_batch)(system, t, b, store_every, jump_rule) for b in batches
    )
    amps = np.concatenate([r[0] for r in results])
    jumps = [j for r in results for j in r[1]]
    return TrajectoryEnsemble(t[::store_every], amps, jumps, **meta)


def ensemble_density_matrix(ensemble, tau=None) -> DensityMatrixSeries:
    """``rho_ij(tau) = (1/N) sum_s conj(c_i^(s)(tau)) c_j^(s)(tau)``."""
    if isinstance(ensemble, WaveTrajectory):
        ensemble = TrajectoryEnsemble.from_trajectories([ensemble])
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    if tau is None:
        idx = np.arange(ensemble.t.size)
    else:
        idx = grid_indices(ensemble.t, tau)
    c = ensemble.amplitudes[:, idx, :]
    rho = np.einsum("sti,stj->tij", np.conj(c), c) / len(ensemble)
    return DensityMatrixSeries(ensemble.t[idx], rho, "ensemble-truth", ensemble.labels)


def grid_indices(t, values) -> np.ndarray:
    """Indices of ``values`` on the uniform grid ``t``; raises if any is off-grid."""
    t = np.asarray(t, dtype=float)
    values = np.atleast_1d(np.asarray(values, dtype=float))
    dt = grid_step(t)
    idx = np.rint((values - t[0]) / dt).astype(int)
    if idx.min() < 0 or idx.max() >= t.size:
        raise CoverageError("requested times fall outside the trajectory grid")
    if np.max(np.abs(t[idx] - values)) > 1e-6 * dt:
        raise CoverageError("requested times are not aligned with the trajectory grid")
    return idx


def lindblad_propagate(system: LevelSystem, grid, rtol=1e-10, atol=1e-12, max_step=1.0) -> DensityMatrixSeries:
    """Integrate the master equation with jump operators ``sqrt(rate)|target><source|``.

    ``grid`` holds the output times (all ``>= t0``). The adaptive DOP853
    integrator keeps its own step below ``max_step`` so narrow coupling pulses
    are not stepped over.
    """
    t_out = np.asarray(grid, dtype=float)
    fastest = max(max(abs(e) for e in system.energies), system.max_carrier)
    if max_step * fastest >= 10 * np.pi:
        raise UnderResolvedGridError("max_step cannot resolve the fastest dynamics")
    if t_out.min() < system.t0 - 1e-12:
        raise CoverageError("Lindblad output times must not precede t0")
    n = system.n_levels
    h0 = np.diag(system.energies).astype(complex)
    pattern = system.pattern.astype(complex)
    ops = []
    for ch in system.channels:
        if ch.rate > 0:
            c = np.zeros((n, n), dtype=complex)
            c[ch.target, ch.source] = np.sqrt(ch.rate)
            ops.append(c)
    cdc = sum((c.conj().T @ c for c in ops), np.zeros((n, n), dtype=complex))

    def rhs(t, y):
        r = y.reshape(n, n)
        h = h0 + system.coupling(t) * pattern
        d = -1j * (h @ r - r @ h) - 0.5 * (cdc @ r + r @ cdc)
        for c in ops:
            d += c @ r @ c.conj().T
        return d.ravel()

    psi0 = np.asarray(system.initial_amplitudes, dtype=complex)
    rho0 = np.outer(psi0, psi0.conj())  # |psi><psi|, transposed on output
    t_end = max(float(t_out.max()), system.t0)
    if t_end > system.t0:
        sol = solve_ivp(
            rhs, (system.t0, t_end), rho0.ravel(), method="DOP853",
            t_eval=t_out, rtol=rtol, atol=atol, max_step=max_step,
        )
        if not sol.success:
            raise RuntimeError(f"Lindblad integration failed: {sol.message}")
        std = sol.y.T.reshape(-1, n, n)
    else:
        std = np.repeat(rho0[None], t_out.size, axis=0)
    rho = np.transpose(std, (0, 2, 1))
    return DensityMatrixSeries(t_out, rho, "lindblad-oracle", system.labels)
