"""Atomic-unit conversions and analytic XUV / THz pulse definitions.

Everything inside the package works in Hartree atomic units. Conversions are
only applied when reading configs or writing human-facing output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import wofz

HARTREE_EV = 27.2114
AU_TIME_FS = 0.0241888
AU_FIELD_V_PER_M = 5.14220674763e11
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class UnitSystem:
    """Stateless table of conversion factors (Hartree atomic units)."""

    hartree_ev = HARTREE_EV
    time_fs = AU_TIME_FS
    field_v_per_m = AU_FIELD_V_PER_M

    @staticmethod
    def energy(value, unit: str) -> float:
        return _convert(_ENERGY, value, unit, "energy")

    @staticmethod
    def time(value, unit: str) -> float:
        return _convert(_TIME, value, unit, "time")

    @staticmethod
    def frequency(value, unit: str) -> float:
        return _convert(_FREQUENCY, value, unit, "frequency")

    @staticmethod
    def field(value, unit: str) -> float:
        return _convert(_FIELD, value, unit, "field")


def _convert(table, value, unit, kind):
    try:
        conv = table[unit]
    except KeyError:
        raise ValueError(f"unknown {kind} unit {unit!r}; expected one of {sorted(table)}") from None
    return conv(value)


def ev_to_au(x):
    return x / HARTREE_EV


def au_to_ev(x):
    return x * HARTREE_EV


def fs_to_au(x):
    return x / AU_TIME_FS


def au_to_fs(x):
    return x * AU_TIME_FS


def thz_to_au(f_thz):
    """Ordinary frequency in THz to angular frequency in a.u."""
    return 2.0 * math.pi * f_thz * 1e12 * AU_TIME_FS * 1e-15


def au_to_thz(omega):
    return omega / (2.0 * math.pi * AU_TIME_FS * 1e-15 * 1e12)


def v_per_m_to_au(x):
    return x / AU_FIELD_V_PER_M


_ENERGY = {"au": lambda x: x, "eV": ev_to_au}
_TIME = {"au": lambda x: x, "fs": fs_to_au}
_FREQUENCY = {"au": lambda x: x, "THz": thz_to_au, "eV": ev_to_au}
_FIELD = {"au": lambda x: x, "V/m": v_per_m_to_au, "MV/cm": lambda x: v_per_m_to_au(x * 1e8)}

ENERGY_UNITS = tuple(_ENERGY)
TIME_UNITS = tuple(_TIME)
FREQUENCY_UNITS = tuple(_FREQUENCY)
FIELD_UNITS = tuple(_FIELD)


def fwhm_to_sigma(fwhm):
    """Field-envelope FWHM to the Gaussian standard deviation."""
    return fwhm * FWHM_TO_SIGMA


@dataclass(frozen=True)
class XuvPulse:
    """Gaussian XUV pulse ``E0 exp(-(t-c)^2 / 2 sigma^2) cos(omega (t-c))``."""

    e0: float
    omega: float
    sigma: float
    center: float = 0.0

    def __post_init__(self):
        if not (self.e0 > 0 and self.omega > 0 and self.sigma > 0):
            raise ValueError(
                f"XUV pulse needs positive e0, omega, sigma; got {self.e0}, {self.omega}, {self.sigma}"
            )

    def envelope(self, t):
        s = np.asarray(t, dtype=float) - self.center
        return self.e0 * np.exp(-(s**2) / (2.0 * self.sigma**2))

    def field(self, t):
        s = np.asarray(t, dtype=float) - self.center
        return self.envelope(t) * np.cos(self.omega * s)

    def vector_potential(self, t):
        # A(t) = -int_{-inf}^t E, written through the Faddeeva function so the
        # Gaussian-times-carrier antiderivative stays finite for omega*sigma >> 1.
        s = np.asarray(t, dtype=float) - self.center
        sig, om = self.sigma, self.omega
        root2s = math.sqrt(2.0) * sig
        u = (s - 1j * om * sig**2) / root2s
        carrier = np.exp(-(s**2) / (2.0 * sig**2) + 1j * om * s)
        total = sig * math.sqrt(2.0 * math.pi) * math.exp(-0.5 * (om * sig) ** 2)
        # each branch overflows on the side where np.where discards it
        with np.errstate(invalid="ignore", over="ignore"):
            early = sig * math.sqrt(math.pi / 2.0) * carrier * wofz(-1j * u)
            late = total - sig * math.sqrt(math.pi / 2.0) * carrier * wofz(1j * u)
        integral = np.where(s < 0, early, late)
        return -self.e0 * np.real(integral)

    def at(self, center: float) -> "XuvPulse":
        return replace(self, center=float(center))


@dataclass(frozen=True)
class ThzPulse:
    """Single-cycle THz pulse whose vector potential crosses zero at ``center``.

    ``A(t) = -(E0/omega) sin(omega s) g(s)`` with ``s = t - center`` and ``g`` a
    broad even envelope (``g(0) = 1``, ``g'(0) = 0``), so ``A(center) = 0`` and
    ``dA/dt(center) = -E0``.
    """

    e0: float
    omega: float
    envelope: str = "sin2"
    envelope_cycles: float = 2.0
    center: float = 0.0

    def __post_init__(self):
        if not (self.e0 > 0 and self.omega > 0):
            raise ValueError(f"THz pulse needs positive e0 and omega; got {self.e0}, {self.omega}")
        if self.envelope not in ("sin2", "gaussian"):
            raise ValueError(f"unknown THz envelope {self.envelope!r}")
        if self.envelope_cycles < 1.0:
            raise ValueError("THz envelope must span at least one cycle")

    @property
    def slope(self) -> float:
        """Streaking slope dA/dt at the zero crossing."""
        return -self.e0

    @property
    def _span(self) -> float:
        return self.envelope_cycles * 2.0 * math.pi / self.omega

    def _g(self, s):
        if self.envelope == "sin2":
            half = self._span / 2.0
            inside = np.abs(s) < half
            g = np.cos(math.pi * s / self._span) ** 2
            dg = -(math.pi / self._span) * np.sin(2.0 * math.pi * s / self._span)
            return np.where(inside, g, 0.0), np.where(inside, dg, 0.0)
        width = self._span / 4.0
        g = np.exp(-(s**2) / (2.0 * width**2))
        return g, -s / width**2 * g

    def vector_potential(self, t):
        s = np.asarray(t, dtype=float) - self.center
        g, _ = self._g(s)
        return -(self.e0 / self.omega) * np.sin(self.omega * s) * g

    def field(self, t):
        s = np.asarray(t, dtype=float) - self.center
        g, dg = self._g(s)
        return self.e0 * np.cos(self.omega * s) * g + (self.e0 / self.omega) * np.sin(self.omega * s) * dg

    def at(self, center: float) -> "ThzPulse":
        return replace(self, center=float(center))


@dataclass(frozen=True)
class FieldConfig:
    """XUV probe plus optional THz streaking field sharing one center."""

    xuv: XuvPulse
    thz: ThzPulse | None = None

    @property
    def center(self) -> float:
        return self.xuv.center

    @property
    def thz_on(self) -> bool:
        return self.thz is not None

    @property
    def alpha(self) -> float:
        return self.thz.slope if self.thz is not None else 0.0

    def at(self, center: float) -> "FieldConfig":
        thz = self.thz.at(center) if self.thz is not None else None
        return FieldConfig(self.xuv.at(center), thz)

    def without_thz(self) -> "FieldConfig":
        return FieldConfig(self.xuv, None)

    def field(self, t):
        e = self.xuv.field(t)
        if self.thz is not None:
            e = e + self.thz.field(t)
        return e

    def vector_potential(self, t):
        a = self.xuv.vector_potential(t)
        if self.thz is not None:
            a = a + self.thz.vector_potential(t)
        return a


def field_at(pulse, t):
    """Electric field of a pulse (or FieldConfig) at time(s) ``t``."""
    return pulse.field(t)


def vector_potential_at(pulse, t):
    """Vector potential of a pulse (or FieldConfig) at time(s) ``t``."""
    return pulse.vector_potential(t)
