"""Gaussian-peak model of the streaked photoelectron spectrum.

In the slowly-varying-envelope limit the spectrum is linear in the density
matrix,

    |M_p|^2 = Re sum_ij rho_ij B_ij(p),

with populations peaking at ``p_ii`` and coherences at the midpoint momenta
``p_ij``. :func:`basis` returns ``B_ij(p)``; :func:`model_spectrum` splits it
into the population part ``W_pop`` and coherence part ``W_coh``.

Two optional refinements multiply each channel amplitude by a smooth factor:

* ``cubic_correction=True`` adds the first-order effect of the
  ``alpha^2 (t-tau)^3 / 6`` term of the streaking action, which the plain
  model drops. It matters once ``alpha * sigma / p`` reaches a few percent.
* ``level_widths`` gives amplitude decay rates ``gamma_i`` (half the total
  jump rate out of level ``i``); the Gaussian integral is then taken with the
  complex detuning ``Omega_ii + i gamma_i``. It matters when ``gamma * sigma``
  is not small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class PeakModelParams:
    omega: float
    sigma: float
    alpha: float
    ionization_potentials: tuple[float, ...]
    e0: float = 1.0
    cubic_correction: bool = False
    level_widths: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ionization_potentials", tuple(float(x) for x in self.ionization_potentials))
        if self.sigma <= 0 or self.omega <= 0:
            raise ConfigError("model needs positive omega and sigma")
        if self.level_widths is not None:
            widths = tuple(float(x) for x in self.level_widths)
            if len(widths) != len(self.ionization_potentials) or min(widths) < 0:
                raise ConfigError("level_widths needs one non-negative rate per level")
            object.__setattr__(self, "level_widths", widths if any(widths) else None)

    @classmethod
    def from_fields(cls, fields, ionization_potentials, cubic_correction=False, level_widths=None) -> "PeakModelParams":
        return cls(
            omega=fields.xuv.omega,
            sigma=fields.xuv.sigma,
            alpha=fields.alpha,
            ionization_potentials=tuple(ionization_potentials),
            e0=fields.xuv.e0,
            cubic_correction=cubic_correction,
            level_widths=level_widths,
        )

    @property
    def n_levels(self) -> int:
        return len(self.ionization_potentials)

    def with_alpha(self, alpha: float) -> "PeakModelParams":
        return replace(self, alpha=float(alpha))

    def b(self, p):
        return 1.0 / self.sigma**2 - 1j * self.alpha * np.asarray(p, dtype=float)

    def width_factor(self, p):
        """``|b(p) sigma| = sqrt(1/sigma^2 + (alpha p sigma)^2)``."""
        p = np.asarray(p, dtype=float)
        return np.sqrt(1.0 / self.sigma**2 + (self.alpha * p * self.sigma) ** 2)

    def prefactor(self, p):
        return math.pi * self.e0**2 / (2.0 * np.abs(self.b(p)))

    def delta(self, i: int, j: int) -> float:
        ip = self.ionization_potentials
        return ip[i] - ip[j]

    def detuning(self, p, i: int, j: int):
        """``Omega_ij(p) = p^2/2 + (Ip_i + Ip_j)/2 - omega``."""
        ip = self.ionization_potentials
        return np.asarray(p, dtype=float) ** 2 / 2 + 0.5 * (ip[i] + ip[j]) - self.omega

    def momentum(self, i: int, j: int) -> float:
        ip = self.ionization_potentials
        return characteristic_momentum(self.omega, ip[i], ip[j])

    def peak_width(self, i: int, j: int) -> float:
        """1/e half-width in momentum of the ``(i, j)`` peak."""
        p = self.momentum(i, j)
        return float(self.width_factor(p) / p)


def characteristic_momentum(omega, ip_i, ip_j) -> float:
    """Positive root of ``Omega_ij(p) = 0``."""
    kinetic = omega - 0.5 * (ip_i + ip_j)
    if kinetic < 0:
        raise ValueError(f"below threshold: omega={omega} < (Ip_i+Ip_j)/2={0.5 * (ip_i + ip_j)}")
    return math.sqrt(2.0 * kinetic)


def _channel_detunings(params: PeakModelParams, p) -> np.ndarray:
    """Complex ``Omega_ii(p) + i gamma_i``, shape (n, n_p)."""
    p = np.asarray(p, dtype=float)
    ip = np.asarray(params.ionization_potentials)[:, None]
    om = (p[None, :] ** 2 / 2 + ip - params.omega).astype(complex)
    if params.level_widths is not None:
        om = om + 1j * np.asarray(params.level_widths)[:, None]
    return om


def _channel_factors(params: PeakModelParams, p):
    """Per-channel refinement factor relative to the plain model, shape (n, n_p), or None.

    For the cubic term: with Gaussian weight ``exp(-b s^2/2 + i Omega s)`` the
    mean of ``s^3`` is ``mu^3 + 3 mu / b`` with ``mu = i Omega / b``, and the
    channel amplitude picks up ``exp(i alpha^2/6 * <s^3>)``.
    """
    if not params.cubic_correction and params.level_widths is None:
        return None
    p = np.asarray(p, dtype=float)
    b = params.b(p)
    om = _channel_detunings(params, p)
    f = np.ones_like(om)
    if params.level_widths is not None:
        g = np.asarray(params.level_widths)[:, None]
        real_om = om.real
        f = f * np.exp(-(2j * g * real_om - g**2) / (2.0 * b))
    if params.cubic_correction:
        mu = 1j * om / b
        f = f * np.exp(1j * params.alpha**2 / 6.0 * (mu**3 + 3.0 * mu / b))
    return f


def channel_amplitudes(params: PeakModelParams, p) -> np.ndarray:
    """Slow-envelope amplitude ``M_p^(i)`` per unit ``c_i(tau)``, shape (n, n_p)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    b = params.b(p)
    ip = np.asarray(params.ionization_potentials)[:, None]
    om = p[None, :] ** 2 / 2 + ip - params.omega
    amp = 0.5 * params.e0 * np.sqrt(2.0 * np.pi / b) * np.exp(-(om**2) / (2.0 * b))
    f = _channel_factors(params, p)
    return amp if f is None else amp * f


def basis(params: PeakModelParams, p) -> np.ndarray:
    """``B_ij(p)`` of shape (n_p, n, n), so that ``|M_p|^2 = Re sum rho_ij B_ij``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    ip = np.asarray(params.ionization_potentials)
    bs2 = params.width_factor(p) ** 2
    b2 = np.abs(params.b(p)) ** 2
    delta = ip[:, None] - ip[None, :]
    om = p[:, None, None] ** 2 / 2 + 0.5 * (ip[:, None] + ip[None, :]) - params.omega
    gauss = np.exp(-(om**2) / bs2[:, None, None]) * np.exp(-((delta / 2) ** 2) / bs2[:, None, None])
    phase = np.exp(1j * params.alpha * p[:, None, None] * om * delta / b2[:, None, None])
    out = params.prefactor(p)[:, None, None] * gauss * phase
    f = _channel_factors(params, p)
    if f is not None:
        f = f.T
        out = out * np.conj(f)[:, :, None] * f[:, None, :]
    return out


@dataclass
class ModelSpectrum:
    p: np.ndarray
    w_pop: np.ndarray
    w_coh: np.ndarray
    total: np.ndarray  # |M_p|^2

    @property
    def signal(self) -> np.ndarray:
        """Detected yield ``|p| |M_p|^2``."""
        return np.abs(self.p) * self.total


def model_spectrum(rho, params: PeakModelParams, p) -> ModelSpectrum:
    """Population, coherence and total model spectrum for one density matrix."""
    rho = np.asarray(rho, dtype=complex)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    bas = basis(params, p)
    pref = params.prefactor(p)
    diag = np.einsum("ii,pii->p", rho, bas).real
    full = np.einsum("ij,pij->p", rho, bas).real
    w_pop = diag / pref
    w_coh = (full - diag) / pref
    return ModelSpectrum(p, w_pop, w_coh, full)


def model_spectrogram(density, params: PeakModelParams, p) -> np.ndarray:
    """``|p| |M_p(tau)|^2`` for every delay of a DensityMatrixSeries, shape (n_tau, n_p)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    bas = basis(params, p)
    return np.abs(p)[None, :] * np.einsum("tij,pij->tp", density.rho, bas).real


def suppression(params: PeakModelParams, i: int, j: int) -> float:
    """Coherence suppression ``exp(-(Delta_ij/2)^2 / |b sigma|^2)`` at ``p_ij``."""
    p = params.momentum(i, j)
    return float(np.exp(-((params.delta(i, j) / 2) ** 2) / params.width_factor(p) ** 2))


def fringe_wavenumber(params: PeakModelParams, i: int, j: int) -> float:
    """``K = Delta_ij alpha p_ij^2 / (1/sigma^4 + alpha^2 p_ij^2)`` (rad per a.u. momentum)."""
    p = params.momentum(i, j)
    a = params.alpha
    return params.delta(i, j) * a * p**2 / (1.0 / params.sigma**4 + a**2 * p**2)


def relative_phase(params: PeakModelParams, i: int, j: int, tau, phi_i=0.0, phi_j=0.0, t0=0.0):
    """``phi_ij(tau) = Delta_ij (tau - t0) + phi_i - phi_j``."""
    return params.delta(i, j) * (np.asarray(tau, dtype=float) - t0) + phi_i - phi_j


def fringe_phase_law(params: PeakModelParams, i: int, j: int, p, tau, phi_i=0.0, phi_j=0.0, t0=0.0):
    """Local cosine argument ``-K (p - p_ij) + phi_ij(tau)`` of the coherence fringe."""
    k = fringe_wavenumber(params, i, j)
    p_ij = params.momentum(i, j)
    return -k * (np.asarray(p, dtype=float) - p_ij) + relative_phase(params, i, j, tau, phi_i, phi_j, t0)


@dataclass(frozen=True)
class PeakRow:
    i: int
    j: int
    momentum: float
    width: float
    suppression: float
    wavenumber: float


def peak_table(params: PeakModelParams) -> list[PeakRow]:
    """One row per density-matrix element with ``i <= j``, sorted by momentum."""
    rows = []
    n = params.n_levels
    for i in range(n):
        for j in range(i, n):
            rows.append(
                PeakRow(
                    i, j, params.momentum(i, j), params.peak_width(i, j),
                    suppression(params, i, j), fringe_wavenumber(params, i, j) + 0.0,
                )
            )
    return sorted(rows, key=lambda r: r.momentum)


def format_peak_table(params: PeakModelParams, labels=None, header_lines=()) -> str:
    labels = labels or [str(i) for i in range(params.n_levels)]
    lines = [f"# {h}" for h in header_lines]
    lines.append("i\tj\tp_ij\twidth\tsuppression\tK")
    for r in peak_table(params):
        lines.append(
            f"{labels[r.i]}\t{labels[r.j]}\t{r.momentum!r}\t{r.width!r}\t{r.suppression!r}\t{r.wavenumber!r}"
        )
    return "\n".join(lines) + "\n"
