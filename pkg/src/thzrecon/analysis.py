"""Beat analysis of delay traces: frequency fits and beat amplitudes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .exceptions import FitError


@dataclass(frozen=True)
class SinusoidFit:
    frequency: float  # angular, rad per a.u.
    amplitude: float
    phase: float
    offset: float
    decay: float
    residual: float

    @property
    def period(self) -> float:
        return 2 * np.pi / self.frequency


def _dominant_frequency(t, y, lo, hi):
    n = 16 * t.size
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(t.size), n))
    freqs = 2 * np.pi * np.fft.rfftfreq(n, t[1] - t[0])
    band = (freqs >= lo) & (freqs <= hi)
    if not band.any():
        raise FitError("frequency band contains no FFT bins")
    return float(freqs[band][np.argmax(spec[band])])


def fit_sinusoid(t, y, guess: float, rel_band: float = 0.3, damped: bool = False) -> SinusoidFit:
    """Least-squares fit of ``c0 + c1 t + a exp(-g t) cos(w t + phi)``.

    Args:
        t: Uniform delay grid.
        y: Trace.
        guess: Expected angular frequency; the FFT peak within
            ``guess * (1 +- rel_band)`` seeds the fit.
        rel_band: Relative half-width of the search band.
        damped: Fit the exponential decay ``g`` (otherwise ``g = 0``).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t_rel = t - t[0]
    w0 = _dominant_frequency(t_rel, y, guess * (1 - rel_band), guess * (1 + rel_band))
    basis = np.column_stack([np.ones_like(t_rel), t_rel, np.cos(w0 * t_rel), np.sin(w0 * t_rel)])
    c, *_ = np.linalg.lstsq(basis, y, rcond=None)
    a0 = float(np.hypot(c[2], c[3]))
    phi0 = float(np.arctan2(-c[3], c[2]))

    def model(tt, c0, c1, a, w, phi, g):
        return c0 + c1 * tt + a * np.exp(-g * tt) * np.cos(w * tt + phi)

    p0 = [c[0], c[1], a0, w0, phi0, 0.0]
    if damped:
        f = model
    else:
        def f(tt, c0, c1, a, w, phi):
            return model(tt, c0, c1, a, w, phi, 0.0)
        p0 = p0[:5]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)  # covariance is not used
            popt, _ = curve_fit(f, t_rel, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"sinusoid fit did not converge: {exc}") from None
    resid = y - f(t_rel, *popt)
    amp, phase = popt[2], popt[4]
    if amp < 0:
        amp, phase = -amp, phase + np.pi
    return SinusoidFit(
        frequency=float(abs(popt[3])),
        amplitude=float(amp),
        phase=float(np.angle(np.exp(1j * (phase - popt[3] * t[0])))),
        offset=float(popt[0]),
        decay=float(popt[5]) if damped else 0.0,
        residual=float(np.sqrt(np.mean(resid**2))),
    )


def beat_amplitudes(t, y, frequencies, trend_order: int = 2) -> np.ndarray:
    """Amplitudes of cosine components at fixed angular ``frequencies``.

    A polynomial trend of ``trend_order`` is fitted jointly so slow population
    changes do not leak into the beat amplitudes.
    """
    t = np.asarray(t, dtype=float)
    x = (t - t.mean()) / max(np.ptp(t), 1e-300)
    cols = [x**k for k in range(trend_order + 1)]
    for w in frequencies:
        cols += [np.cos(w * t), np.sin(w * t)]
    a = np.column_stack(cols)
    c, *_ = np.linalg.lstsq(a, np.asarray(y, dtype=float), rcond=None)
    beats = c[trend_order + 1 :]
    return np.hypot(beats[0::2], beats[1::2])


@dataclass(frozen=True)
class ExponentialFit:
    frequency: float  # angular; positive for exp(-i w t)
    amplitude: complex
    decay: float
    residual: float

    @property
    def period(self) -> float:
        return 2 * np.pi / abs(self.frequency)


def fit_complex_exponential(t, z, guess: float, rel_band: float = 0.3) -> ExponentialFit:
    """Fit ``z(t) ~ c exp(-(i w + g)(t - t[0]))`` to a complex trace.

    A coherence ``rho_ij`` rotates one way only, so fitting the complex trace
    needs one exponential where the real part would need a cosine plus
    trend; it is markedly less sensitive to slow amplitude drifts.

    Args:
        t: Uniform delay grid.
        z: Complex trace, e.g. a reconstructed coherence.
        guess: Expected angular frequency (sign included). The FFT peak within
            ``guess * (1 +- rel_band)`` seeds the fit.
        rel_band: Relative half-width of the search band.
    """
    from scipy.optimize import least_squares

    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    t_rel = t - t[0]
    # Rotating z by exp(-i w t) shows up at positive FFT frequency for w > 0.
    n = 16 * t.size
    spec = np.abs(np.fft.fft(np.conj(z) * np.hanning(t.size), n))
    freqs = 2 * np.pi * np.fft.fftfreq(n, t[1] - t[0])
    lo, hi = sorted((guess * (1 - rel_band), guess * (1 + rel_band)))
    band = (freqs >= lo) & (freqs <= hi)
    if not band.any():
        raise FitError("frequency band contains no FFT bins")
    w0 = float(freqs[band][np.argmax(spec[band])])
    c0 = np.mean(z * np.exp(1j * w0 * t_rel))

    def resid(x):
        m = (x[0] + 1j * x[1]) * np.exp(-(1j * x[2] + x[3]) * t_rel)
        d = z - m
        return np.concatenate([d.real, d.imag])

    sol = least_squares(resid, [c0.real, c0.imag, w0, 0.0], x_scale="jac")
    if not sol.success:
        raise FitError(f"exponential fit did not converge: {sol.message}")
    a, b, w, g = sol.x
    return ExponentialFit(
        frequency=float(w),
        amplitude=complex(a, b),
        decay=float(g),
        residual=float(np.sqrt(np.mean(sol.fun**2))),
    )
