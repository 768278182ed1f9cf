"""Strong-field-approximation photoionization amplitudes and spectrograms.

The direct length-gauge amplitude (dipole factor set to one) is

    M_p(tau) = int dt c(t) E_xuv(t) exp(i S_p(t)),   S_p(t) = 1/2 int^t (p + A)^2,

with ``c(t) = sum_i c_i(t)`` the Schroedinger-picture amplitudes. Both pulses
are centered on ``tau``, so in the window variable ``s = t - tau`` the phase
``S_p(tau + s) - S_p(tau)`` does not depend on ``tau``. A spectrogram is then a
single complex matrix product between a fixed (p, s) phase matrix and the
windowed amplitudes of every trajectory at every delay.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_simpson

from .dynamics import TrajectoryEnsemble, WaveTrajectory, grid_indices, grid_step
from .exceptions import ConfigError, CoverageError, UnderResolvedGridError
from .units import FieldConfig

WINDOW_SIGMAS = 5.0
SAMPLES_PER_PERIOD = 20


@dataclass(frozen=True)
class MomentumGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ConfigError("momentum grid needs at least two points")
        if np.any(v <= 0):
            raise ConfigError("momenta are taken along the positive polarization direction (p > 0)")
        if np.any(np.diff(v) <= 0):
            raise ConfigError("momentum grid must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, start, stop, step) -> "MomentumGrid":
        n = int(round((stop - start) / step)) + 1
        return cls(start + step * np.arange(n))

    @property
    def step(self) -> float:
        return float(np.mean(np.diff(self.values)))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def check_fringes(self, params, pairs=None, samples=8):
        """Require ``samples`` grid points per fringe wavelength ``2 pi / |K|``."""
        from .model import fringe_wavenumber

        n = params.n_levels
        pairs = pairs or [(i, j) for i in range(n) for j in range(i + 1, n)]
        for i, j in pairs:
            k = abs(fringe_wavenumber(params, i, j))
            if k > 0 and self.step > 2 * math.pi / k / samples:
                raise UnderResolvedGridError(
                    f"momentum step {self.step:.3g} gives fewer than {samples} samples per fringe "
                    f"of pair ({i},{j}) (wavelength {2 * math.pi / k:.3g})"
                )


def _pvalues(p):
    return np.atleast_1d(np.asarray(getattr(p, "values", p), dtype=float))


@dataclass
class Spectrogram:
    p: np.ndarray
    tau: np.ndarray
    w: np.ndarray  # (n_tau, n_p)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = _pvalues(self.p)
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.tau.size, self.p.size):
            raise ValueError(f"w has shape {self.w.shape}, grids give {(self.tau.size, self.p.size)}")

    @property
    def thz_on(self) -> bool:
        return bool(self.metadata.get("thz_on", False))

    def column(self, p0) -> np.ndarray:
        """``w(p0; tau)`` for every delay, interpolated along p with a cubic spline."""
        from scipy.interpolate import CubicSpline

        p0 = float(p0)
        if not (self.p[0] <= p0 <= self.p[-1]):
            raise CoverageError(f"p={p0} outside the momentum grid [{self.p[0]}, {self.p[-1]}]")
        return CubicSpline(self.p, self.w, axis=1)(p0)

    def row(self, tau) -> np.ndarray:
        k = int(np.argmin(np.abs(self.tau - tau)))
        if abs(self.tau[k] - tau) > 1e-6 * max(1.0, abs(tau)):
            raise CoverageError(f"delay {tau} is not on the spectrogram grid")
        return self.w[k]

    def save_tsv(self, path, time_origin=None, header_lines=()):
        write_spectrogram_tsv(path, self, time_origin, header_lines)

    @classmethod
    def load_tsv(cls, path) -> "Spectrogram":
        return read_spectrogram_tsv(path)


def _meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def _meta_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_spectrogram_tsv(path, spec: Spectrogram, time_origin=None, header_lines=()):
    """Long-format TSV: ``#``-prefixed header, then ``tau  p  w`` rows.

    ``tau`` is written relative to ``time_origin`` (stored in the header); all
    floats use the shortest repr that round-trips exactly.
    """
    origin = float(spec.metadata.get("time_origin", 0.0) if time_origin is None else time_origin)
    meta = dict(spec.metadata, time_origin=origin, n_tau=spec.tau.size, n_p=spec.p.size)
    lines = ["# thzrecon spectrogram v1"]
    lines += [f"# {h}" for h in header_lines]
    lines += [f"# {k} = {_meta_text(meta[k])}" for k in sorted(meta)]
    lines.append("tau\tp\tw")
    ps = [repr(float(x)) for x in spec.p]
    for k, t in enumerate(spec.tau):
        ts = repr(float(t - origin))
        row = spec.w[k]
        lines.extend(f"{ts}\t{pv}\t{float(wv)!r}" for pv, wv in zip(ps, row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_spectrogram_tsv(path) -> Spectrogram:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if " = " in text:
                    key, value = text.split(" = ", 1)
                    meta[key] = _meta_value(value)
            elif line.startswith("tau"):
                continue
            elif line.strip():
                body.append(line)
    data = np.array([[float(x) for x in line.split("\t")] for line in body])
    n_tau, n_p = int(meta.pop("n_tau")), int(meta.pop("n_p"))
    data = data.reshape(n_tau, n_p, 3)
    origin = float(meta.get("time_origin", 0.0))
    return Spectrogram(data[0, :, 1], data[:, 0, 0] + origin, data[:, :, 2], meta)


def action_phase(p, fields: FieldConfig, t, t_start: float = 0.0, panel: float = 0.25):
    """``S_p(t) = 1/2 int_{t_start}^t (p + A(t''))^2 dt''`` by composite Gauss-Legendre."""
    nodes, weights = leggauss(8)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t_arr)
    for k, tk in enumerate(t_arr):
        span = tk - t_start
        n = max(1, int(math.ceil(abs(span) / panel)))
        edges = np.linspace(t_start, tk, n + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        f = 0.5 * (p + fields.vector_potential(x)) ** 2
        out[k] = float(np.sum(f.reshape(n, -1) * weights[None, :] * half[:, None]))
    return out if np.ndim(t) else float(out[0])


def max_quadrature_step(fields: FieldConfig, p_max: float, ip_max: float = 0.0) -> float:
    omega_fast = max(fields.xuv.omega, p_max**2 / 2 + ip_max)
    return 2 * math.pi / omega_fast / SAMPLES_PER_PERIOD


def _default_stride(dt, fields, p_max, ip_max):
    h = max_quadrature_step(fields, p_max, ip_max)
    if dt > h * (1 + 1e-9):
        raise UnderResolvedGridError(
            f"trajectory step {dt:g} exceeds the quadrature step limit {h:.4g} for the XUV carrier"
        )
    return max(1, int(math.floor(h / dt * (1 + 1e-9))))


def window_phase_matrix(fields: FieldConfig, p, s, quadratic_action=True) -> np.ndarray:
    """``w_k E_xuv(s_k) exp(i [S_p(tau+s_k) - S_p(tau)])`` on the window grid ``s``.

    The weights ``w_k`` are trapezoid weights; the XUV field alone drives
    ionization while ``A`` includes both pulses.
    """
    local = fields.at(0.0)
    a = local.vector_potential(s)
    a1 = cumulative_simpson(a, x=s, initial=0.0)
    a2 = cumulative_simpson(a * a, x=s, initial=0.0)
    k0 = int(np.argmin(np.abs(s)))
    a1 -= a1[k0]
    a2 -= a2[k0]
    p = _pvalues(p)
    phase = np.outer(p**2 / 2, s) + np.outer(p, a1)
    if quadratic_action:
        phase = phase + 0.5 * a2[None, :]
    wts = np.full(s.size, s[1] - s[0])
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return np.exp(1j * phase) * (wts * local.xuv.field(s))[None, :]


def _window_offsets(sigma, dt, stride):
    half = int(math.ceil(WINDOW_SIGMAS * sigma / (dt * stride) - 1e-9))
    return stride * np.arange(-half, half + 1)


def sfa_amplitude(
    trajectory: WaveTrajectory, fields: FieldConfig, p, tau: float,
    stride: int | None = None, ionization_potentials=None, quadratic_action=True,
):
    """``M_p(tau)`` by direct quadrature over ``[tau - 5 sigma, tau + 5 sigma]``.

    Args:
        trajectory: Amplitudes ``c_i(t)`` on a uniform grid covering the window.
        fields: Pulse parameters; the pulse center is moved to ``tau``.
        p: Final momentum or array of momenta.
        tau: Delay; must be a trajectory grid point.
        stride: Use every ``stride``-th trajectory sample (default: the
            coarsest stride meeting the carrier sampling rule).
        ionization_potentials: Used only to size the default stride.
        quadratic_action: Keep the ``A^2`` term of the action.

    Returns:
        Complex amplitude (scalar for scalar ``p``).
    """
    pv = _pvalues(p)
    t = trajectory.t
    dt = grid_step(t)
    ip_max = max(ionization_potentials) if ionization_potentials is not None else 0.0
    if stride is None:
        stride = _default_stride(dt, fields, float(pv.max()), ip_max)
    offsets = _window_offsets(fields.xuv.sigma, dt, stride)
    k = _coverage_index(t, [tau], offsets)[0]
    s = offsets * dt
    psi = trajectory.amplitudes.sum(axis=1)[k + offsets]
    m = window_phase_matrix(fields, pv, s, quadratic_action) @ psi
    return m if np.ndim(p) else complex(m[0])


def _coverage_index(t, tau, offsets):
    try:
        idx = grid_indices(t, tau)
    except CoverageError as exc:
        raise CoverageError(f"delays must be trajectory grid points: {exc}") from None
    if idx.min() + offsets[0] < 0 or idx.max() + offsets[-1] >= t.size:
        raise CoverageError(
            f"trajectory [{t[0]:g}, {t[-1]:g}] does not cover the XUV window "
            f"(+-{WINDOW_SIGMAS} sigma) of every delay"
        )
    return idx


def _block_yield(phase, psi, idx, offsets, p):
    cols = psi[:, idx[:, None] + offsets[None, :]]  # (N, B, K)
    n, b, k = cols.shape
    f = np.ascontiguousarray(cols.transpose(2, 1, 0).reshape(k, b * n))
    m = phase @ f
    y = (m.real**2 + m.imag**2).reshape(p.size, b, n).mean(axis=2)
    return np.abs(p)[None, :] * y.T


def spectrogram(
    ensemble, fields: FieldConfig, pgrid, tau_grid, stride: int | None = None,
    n_jobs: int = 1, block_columns: int = 512, quadratic_action=True, metadata=None,
) -> Spectrogram:
    """Ensemble-averaged ``w(p; tau) = (1/N) sum_s |p| |M_p^(s)(tau)|^2``.

    Delays are processed in fixed-size blocks (the last one padded), so the
    floating-point work per cell is the same for any ``n_jobs``.
    """
    if isinstance(ensemble, WaveTrajectory):
        ensemble = TrajectoryEnsemble.from_trajectories([ensemble])
    p = _pvalues(pgrid)
    MomentumGrid(p)
    tau = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    t = ensemble.t
    dt = grid_step(t)
    ip_max = max(-e for e in ensemble.energies) if ensemble.energies else 0.0
    if stride is None:
        stride = _default_stride(dt, fields, float(p.max()), ip_max)
    elif stride * dt > max_quadrature_step(fields, float(p.max()), ip_max) * (1 + 1e-9):
        raise UnderResolvedGridError(f"quadrature step {stride * dt:g} too coarse for the XUV carrier")
    offsets = _window_offsets(fields.xuv.sigma, dt, stride)
    idx = _coverage_index(t, tau, offsets)
    phase = window_phase_matrix(fields, p, offsets * dt, quadratic_action)
    psi = ensemble.amplitudes.sum(axis=2)
    n_traj = len(ensemble)
    per_block = max(1, block_columns // n_traj)
    blocks = []
    for start in range(0, tau.size, per_block):
        chunk = idx[start : start + per_block]
        pad = per_block - chunk.size
        blocks.append((np.concatenate([chunk, np.repeat(chunk[-1:], pad)]), chunk.size))
    rows = Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(_block_yield)(phase, psi, b, offsets, p) for b, _ in blocks
    )
    w = np.concatenate([r[:n] for r, (_, n) in zip(rows, blocks)], axis=0)
    meta = {
        "thz_on": fields.thz_on,
        "xuv_e0": fields.xuv.e0,
        "xuv_omega": fields.xuv.omega,
        "xuv_sigma": fields.xuv.sigma,
        "thz_e0": fields.thz.e0 if fields.thz_on else 0.0,
        "thz_omega": fields.thz.omega if fields.thz_on else 0.0,
        "alpha": fields.alpha,
        "ensemble_size": n_traj,
        "ensemble_seed": -1 if ensemble.seed is None else ensemble.seed,
        "quadrature_step": stride * dt,
        "level_hash": level_hash(ensemble.energies, ensemble.labels),
    }
    meta.update(metadata or {})
    return Spectrogram(p, tau, w, meta)


def level_hash(energies, labels) -> str:
    text = repr((tuple(energies or ()), tuple(labels or ())))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
