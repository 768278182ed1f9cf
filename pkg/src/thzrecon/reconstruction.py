"""Density-matrix reconstruction from THz-free and THz-streaked spectrograms.

The protocol runs in two passes:

1. :func:`extract_populations` reads the THz-free spectrogram at every
   ``p_ii`` and undoes the small Gaussian overlap between neighbouring
   photolines.
2. :func:`extract_coherences` subtracts the population background (now
   broadened by the streaking field) from the THz-on spectrogram and reads each
   coherence at its characteristic momentum ``p_ij``.

:func:`extract_phase` reads the relative phase of one pair from a single
momentum slice. Every fit in this module is linear in the density-matrix
elements because the peak model is linear in ``rho``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import hilbert
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dynamics import DensityMatrixSeries
from .exceptions import ConfigError, CoverageError, FitError, UnderResolvedGridError
from .model import PeakModelParams, basis, fringe_wavenumber, suppression
from .sfa import Spectrogram

SUPPRESSION_FLOOR = 1e-3
MAX_OVERLAP_CONDITION = 1e6
MIN_FRINGE_SAMPLES = 8


def check_spectrogram(spec) -> Spectrogram:
    """Validate a spectrogram before it enters a fit."""
    if not isinstance(spec, Spectrogram):
        raise TypeError(f"expected a Spectrogram, got {type(spec).__name__}")
    if not np.all(np.isfinite(spec.w)):
        raise ValueError("spectrogram contains non-finite values")
    if spec.w.min() < 0:
        raise ValueError("spectrogram has negative yields")
    if spec.p.size < 2 or np.any(np.diff(spec.p) <= 0):
        raise ValueError("momentum grid must be strictly increasing")
    return spec


def params_from_spectrogram(
    spec: Spectrogram, ionization_potentials, cubic_correction=True, level_widths=None
) -> PeakModelParams:
    """Model parameters from the field metadata carried by a spectrogram."""
    m = spec.metadata
    try:
        return PeakModelParams(
            omega=float(m["xuv_omega"]),
            sigma=float(m["xuv_sigma"]),
            alpha=float(m.get("alpha", 0.0)),
            ionization_potentials=tuple(ionization_potentials),
            e0=float(m["xuv_e0"]),
            cubic_correction=cubic_correction,
            level_widths=level_widths,
        )
    except KeyError as exc:
        raise ConfigError(f"spectrogram metadata lacks {exc.args[0]!r}") from None


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _reduced_yield(spec: Spectrogram) -> np.ndarray:
    """``w / |p|``, the model's ``|M_p|^2``, shape (n_tau, n_p)."""
    return spec.w / np.abs(spec.p)[None, :]


def _interp_columns(spec: Spectrogram, p_points) -> np.ndarray:
    p_points = np.asarray(p_points, dtype=float)
    if p_points.min() < spec.p[0] or p_points.max() > spec.p[-1]:
        raise CoverageError(
            f"characteristic momenta {np.round(p_points, 4).tolist()} not all inside "
            f"[{spec.p[0]:.4g}, {spec.p[-1]:.4g}]"
        )
    return CubicSpline(spec.p, _reduced_yield(spec), axis=1)(p_points)


def population_overlap(params: PeakModelParams, p_points=None) -> np.ndarray:
    """``O[i, k] = B_kk(p_i)``: population ``k`` seen at sample ``p_i`` of peak ``i``.

    ``p_points`` defaults to the peak centers ``p_ii``.
    """
    n = params.n_levels
    if p_points is None:
        p_points = [params.momentum(i, i) for i in range(n)]
    bas = basis(params, np.asarray(p_points, dtype=float))
    return np.real(np.einsum("pkk->pk", bas))


def _peak_samples(spec: Spectrogram, params: PeakModelParams) -> np.ndarray:
    # Grid points nearest to each p_ii. A photoline is only ~1/(sigma p) wide,
    # so sampling on the grid avoids interpolation error in the heights.
    centers = np.array([params.momentum(i, i) for i in range(params.n_levels)])
    if centers.min() < spec.p[0] or centers.max() > spec.p[-1]:
        raise CoverageError(
            f"characteristic momenta {np.round(centers, 4).tolist()} not all inside "
            f"[{spec.p[0]:.4g}, {spec.p[-1]:.4g}]"
        )
    return np.abs(spec.p[:, None] - centers[None, :]).argmin(axis=0)


def extract_populations(
    spec: Spectrogram,
    params: PeakModelParams,
    require_thz_off: bool = True,
    calibration: str = "absolute",
    reference_tau: float | None = None,
    max_condition: float = MAX_OVERLAP_CONDITION,
    coherence_background=None,
) -> np.ndarray:
    """Populations ``rho_ii(tau)`` from peak heights at ``p_ii``, shape (n_tau, n).

    Heights are read at the grid point nearest each ``p_ii`` and the overlap
    system is evaluated at exactly those momenta.

    Args:
        spec: Spectrogram, normally recorded without the THz field.
        params: Model parameters; ``alpha`` is forced to 0 for THz-free input.
        require_thz_off: Reject spectrograms whose metadata says THz on.
        calibration: ``"absolute"`` uses the analytic prefactor,
            ``"self"`` rescales so the trace is one at ``reference_tau``.
        reference_tau: Delay used by self-calibration (default: last delay).
        max_condition: Largest acceptable condition number of the overlap matrix.
        coherence_background: Optional (n_tau, n) coherence contribution to
            ``|M|^2`` at the sampled momenta, subtracted before solving.

    Raises:
        ConfigError: THz-on input while ``require_thz_off`` is set.
        CoverageError: a ``p_ii`` lies outside the momentum grid.
        FitError: the photolines overlap too strongly to be separated.
    """
    check_spectrogram(spec)
    if spec.thz_on and require_thz_off:
        raise ConfigError("population pass needs a THz-free spectrogram")
    if not spec.thz_on:
        params = params.with_alpha(0.0)
    idx = _peak_samples(spec, params)
    overlap = population_overlap(params, spec.p[idx])
    cond = np.linalg.cond(overlap)
    if not np.isfinite(cond) or cond > max_condition:
        raise FitError(
            f"overlap matrix condition {cond:.3g}: the XUV bandwidth cannot resolve the levels"
        )
    heights = _reduced_yield(spec)[:, idx]
    if coherence_background is not None:
        heights = heights - coherence_background
    pops = np.linalg.solve(overlap, heights.T).T
    if calibration == "self":
        k = spec.tau.size - 1 if reference_tau is None else int(np.argmin(np.abs(spec.tau - reference_tau)))
        pops = pops / pops[k].sum()
    elif calibration != "absolute":
        raise ConfigError(f"unknown calibration {calibration!r}")
    return pops


@dataclass
class CoherenceResult:
    pairs: list[tuple[int, int]]
    rho: np.ndarray  # (n_tau, n_pairs) complex: Re per ``readout``, Im per ``im_method``
    slice_fit: np.ndarray  # (n_tau, n_pairs) complex, from the joint slice fit
    point_re: np.ndarray  # (n_tau, n_pairs) Re from the single-point formula at p_ij
    background: np.ndarray  # (n_tau, n_pairs) subtracted at p_ij (population + other coherences)
    population_background: np.ndarray  # (n_tau, n_pairs)
    residual: np.ndarray  # (n_tau,) relative rms residual of the slice fit
    skipped: list[tuple[int, int]] = field(default_factory=list)
    im_method: str = "fit"
    readout: str = "slice"


def _fit_window(params, pairs, p, widths):
    mask = np.zeros(p.size, dtype=bool)
    for i, j in pairs:
        c = params.momentum(i, j)
        mask |= np.abs(p - c) <= widths * params.peak_width(i, j)
    return mask


def _coherence_columns(bas, pairs):
    cols = []
    for i, j in pairs:
        cols.append(2.0 * bas[:, i, j].real)
        cols.append(-2.0 * bas[:, i, j].imag)
    return np.stack(cols, axis=1)


def extract_coherences(
    spec_on: Spectrogram,
    populations: np.ndarray,
    params: PeakModelParams,
    pairs=None,
    window_widths: float = 3.0,
    suppression_floor: float = SUPPRESSION_FLOOR,
    im_method: str = "fit",
    readout: str = "slice",
) -> CoherenceResult:
    """Coherences ``rho_ij(tau)`` from the THz-on spectrogram.

    All coherences are first fitted jointly on the momentum slice of each delay
    with the populations held fixed. The point read-out is also formed at each
    ``p_ij``: the measured ``|M_p|^2`` minus the population background and the
    fitted contributions of the other coherences, divided by the pair's own
    basis value there. It uses one momentum sample, so strongly suppressed
    pairs amplify any model mismatch; the slice value is the default.

    Args:
        spec_on: THz-streaked spectrogram.
        populations: ``rho_ii(tau)`` from the THz-free pass, shape (n_tau, n).
        params: Model parameters with the streaking slope of ``spec_on``.
        pairs: ``(i, j)`` pairs with ``i < j``; default all pairs above the floor.
        window_widths: Fit window half-width in peak widths around each ``p_ij``.
        suppression_floor: Pairs with ``exp(-(Delta/2)^2/|b sigma|^2)`` below
            this are unmeasurable.
        im_method: ``"fit"`` takes ``Im rho_ij`` from the slice fit,
            ``"hilbert"`` from the quadrature of the ``Re rho_ij`` beat.
        readout: ``"slice"`` or ``"point"`` source of ``Re rho_ij``.

    Raises:
        FitError: a requested pair is suppressed below the floor.
    """
    check_spectrogram(spec_on)
    populations = np.asarray(populations, dtype=float)
    n = params.n_levels
    if populations.shape != (spec_on.tau.size, n):
        raise ValueError(f"populations shape {populations.shape} != {(spec_on.tau.size, n)}")
    if im_method not in ("fit", "hilbert"):
        raise ConfigError(f"unknown im_method {im_method!r}")
    if readout not in ("slice", "point"):
        raise ConfigError(f"unknown readout {readout!r}")
    requested = pairs is not None
    pairs = [tuple(sorted(pq)) for pq in (pairs or _pairs(n))]
    fitted, skipped = [], []
    for i, j in _pairs(n):
        if suppression(params, i, j) >= suppression_floor:
            fitted.append((i, j))
        elif (i, j) in pairs:
            if requested:
                raise FitError(
                    f"coherence ({i},{j}) suppressed to {suppression(params, i, j):.2e} "
                    f"(< {suppression_floor}); increase the THz field"
                )
            skipped.append((i, j))
    p = spec_on.p
    y = _reduced_yield(spec_on)
    bas = basis(params, p)
    pop_cols = np.real(np.einsum("pkk->pk", bas))
    target = y - populations @ pop_cols.T
    if fitted:
        mask = _fit_window(params, fitted, p, window_widths)
        a = _coherence_columns(bas[mask], fitted)
        coef, *_ = np.linalg.lstsq(a, target[:, mask].T, rcond=None)
        resid = target[:, mask] - (a @ coef).T
        norm = np.maximum(np.linalg.norm(y[:, mask], axis=1), 1e-300)
        residual = np.linalg.norm(resid, axis=1) / norm
        slice_rho = coef[0::2].T + 1j * coef[1::2].T
    else:
        slice_rho = np.zeros((spec_on.tau.size, 0), dtype=complex)
        residual = np.zeros(spec_on.tau.size)
    index = {pq: k for k, pq in enumerate(fitted)}
    out_pairs = [pq for pq in pairs if pq in index]
    centers = np.array([params.momentum(i, j) for i, j in out_pairs])
    measured = _interp_columns(spec_on, centers) if out_pairs else np.zeros((spec_on.tau.size, 0))
    bas_c = basis(params, centers) if out_pairs else None
    rho = np.zeros((spec_on.tau.size, len(out_pairs)), dtype=complex)
    point_re = np.zeros((spec_on.tau.size, len(out_pairs)))
    background = np.zeros_like(point_re)
    pop_bg = np.zeros_like(background)
    for c, (i, j) in enumerate(out_pairs):
        b_here = bas_c[c]
        pop_bg[:, c] = populations @ np.real(np.diag(b_here))
        other = np.zeros(spec_on.tau.size)
        for (k, l), m in index.items():
            if (k, l) == (i, j):
                continue
            if abs(centers[c] - params.momentum(k, l)) <= window_widths * params.peak_width(k, l):
                other += 2.0 * np.real(slice_rho[:, m] * b_here[k, l])
        background[:, c] = pop_bg[:, c] + other
        own = slice_rho[:, index[(i, j)]]
        re_b, im_b = b_here[i, j].real, b_here[i, j].imag
        # Re(rho B) = x Re B - y Im B; at p_ij the plain model has Im B = 0.
        point_re[:, c] = (0.5 * (measured[:, c] - background[:, c]) + own.imag * im_b) / re_b
        re = own.real if readout == "slice" else point_re[:, c]
        if im_method == "fit":
            im = own.imag
        else:
            im = _hilbert_imag(re, params.delta(i, j))
        rho[:, c] = re + 1j * im
    return CoherenceResult(
        out_pairs, rho, slice_rho[:, [index[pq] for pq in out_pairs]], point_re, background, pop_bg,
        residual, skipped, im_method, readout,
    )


def _hilbert_imag(re, delta):
    # rho_ij ~ exp(-i Delta tau): Im follows -sign(Delta) times the quadrature of Re.
    centered = re - np.mean(re)
    return -np.sign(delta) * np.imag(hilbert(centered))


@dataclass
class PhaseResult:
    phi: float
    rho_ij: complex
    amplitude: float
    residual: float
    n_samples: int


def extract_phase(
    spec_on: Spectrogram,
    tau: float,
    pair,
    params: PeakModelParams,
    populations=None,
    window_widths: float = 3.0,
    noise_floor: float = 1e-3,
    min_fringe_samples: int = MIN_FRINGE_SAMPLES,
) -> PhaseResult:
    """Relative phase ``phi_ij(tau)`` from the fringes of a single momentum slice.

    The slice near ``p_ij`` is fitted with the model coherence term
    ``2 Re(rho_ij B_ij(p))``, whose fringes follow the local cosine law
    ``cos(-K (p - p_ij) + phi)``. Populations are subtracted when given,
    otherwise fitted as free amplitudes; neighbouring coherences are fitted too.

    Args:
        spec_on: THz-streaked spectrogram.
        tau: Delay of the slice (must be on the grid).
        pair: ``(i, j)``; the returned phase is ``phi_ij = -arg rho_ij``.
        params: Model parameters with the streaking slope of ``spec_on``.
        populations: Optional ``rho_kk`` at this delay, length n.
        window_widths: Fit window half-width in peak widths.
        noise_floor: Minimum fitted coherence signal relative to the slice maximum.
        min_fringe_samples: Required momentum samples per fringe wavelength.

    Returns:
        PhaseResult with ``phi`` in ``(-pi, pi]``.

    Raises:
        UnderResolvedGridError: fewer than ``min_fringe_samples`` per fringe.
        FitError: the coherence signal is below the noise floor.
    """
    check_spectrogram(spec_on)
    i, j = pair
    if i == j:
        raise ValueError("phase needs two distinct levels")
    k = abs(fringe_wavenumber(params, i, j))
    step = float(np.max(np.diff(spec_on.p)))
    if k > 0 and 2 * math.pi / k / step < min_fringe_samples:
        raise UnderResolvedGridError(
            f"{2 * math.pi / k / step:.1f} samples per fringe for pair ({i},{j}); need {min_fringe_samples}"
        )
    y = spec_on.row(tau) / np.abs(spec_on.p)
    p_ij = params.momentum(i, j)
    mask = np.abs(spec_on.p - p_ij) <= window_widths * params.peak_width(i, j)
    if mask.sum() < 4:
        raise CoverageError(f"momentum grid has no samples around p_ij={p_ij:.4g}")
    p = spec_on.p[mask]
    bas = basis(params, p)
    target = y[mask].copy()
    cols = []
    n = params.n_levels
    if populations is None:
        cols.extend(np.real(bas[:, m, m]) for m in range(n))
        n_free = n
    else:
        target -= np.real(np.einsum("k,pkk->p", np.asarray(populations, dtype=float), bas))
        n_free = 0
    lo, hi = p[0], p[-1]
    others = [
        pq for pq in _pairs(n)
        if pq != tuple(sorted(pair))
        and suppression(params, *pq) >= SUPPRESSION_FLOOR
        and lo - 3 * params.peak_width(*pq) <= params.momentum(*pq) <= hi + 3 * params.peak_width(*pq)
    ]
    fit_pairs = [tuple(sorted(pair))] + others
    a = np.column_stack(cols + list(_coherence_columns(bas, fit_pairs).T))
    coef, *_ = np.linalg.lstsq(a, target, rcond=None)
    resid = target - a @ coef
    x, yv = coef[n_free], coef[n_free + 1]
    rho = complex(x, yv) if i < j else complex(x, -yv)
    signal = 2.0 * abs(rho) * float(np.max(np.abs(bas[:, i, j])))
    if signal < noise_floor * float(np.max(np.abs(y[mask]))):
        raise FitError(f"coherence ({i},{j}) signal {signal:.3g} below the noise floor")
    phi = -math.atan2(rho.imag, rho.real)
    if phi <= -math.pi:
        phi += 2 * math.pi
    return PhaseResult(
        phi=phi,
        rho_ij=rho,
        amplitude=abs(rho),
        residual=float(np.linalg.norm(resid) / max(np.linalg.norm(target), 1e-300)),
        n_samples=int(mask.sum()),
    )


@dataclass
class ReconstructionResult:
    density: DensityMatrixSeries
    populations: np.ndarray
    coherences: CoherenceResult
    audit: dict
    flags: list[str]

    def to_audit_json(self) -> str:
        return json.dumps(self.audit, sort_keys=True, indent=1)


def reconstruct(
    spec_off: Spectrogram,
    spec_on: Spectrogram,
    params: PeakModelParams,
    pairs=None,
    labels=None,
    calibration: str = "absolute",
    reference_tau=None,
    window_widths: float = 3.0,
    suppression_floor: float = SUPPRESSION_FLOOR,
    im_method: str = "fit",
    readout: str = "slice",
) -> ReconstructionResult:
    """Two-pass reconstruction of the full density matrix.

    ``params.alpha`` must be the streaking slope of ``spec_on``; the THz-free
    pass uses the same parameters with ``alpha = 0``.
    """
    check_spectrogram(spec_off)
    check_spectrogram(spec_on)
    if spec_off.tau.shape != spec_on.tau.shape or not np.allclose(spec_off.tau, spec_on.tau):
        raise CoverageError("THz-free and THz-on spectrograms must share one delay grid")
    if not spec_on.thz_on and params.alpha != 0:
        raise ConfigError("second pass needs a THz-on spectrogram")
    pops = extract_populations(spec_off, params, calibration=calibration, reference_tau=reference_tau)
    coh = extract_coherences(
        spec_on, pops, params, pairs, window_widths, suppression_floor, im_method, readout
    )
    n = params.n_levels
    rho = np.zeros((spec_on.tau.size, n, n), dtype=complex)
    rho[:, np.arange(n), np.arange(n)] = pops
    for c, (i, j) in enumerate(coh.pairs):
        rho[:, i, j] = coh.rho[:, c]
        rho[:, j, i] = np.conj(coh.rho[:, c])
    labels = tuple(labels) if labels is not None else tuple(str(k) for k in range(n))
    flags = []
    if pops.min() < -0.05 or pops.max() > 1.05:
        flags.append("population-out-of-range")
    for c, (i, j) in enumerate(coh.pairs):
        # |rho_ij|^2 <= rho_ii rho_jj, with slack for reconstruction noise
        bound = np.sqrt(np.clip(pops[:, i] * pops[:, j], 0, None)) + 0.1
        if np.any(np.abs(coh.rho[:, c]) > bound):
            flags.append(f"cauchy-schwarz-{labels[i]}-{labels[j]}")
    density = DensityMatrixSeries(
        spec_on.tau, rho, "reconstructed", labels,
        diagnostics={"trace": pops.sum(axis=1), "slice_residual": coh.residual},
    )
    audit = {
        "schema": "thzrecon.audit/1",
        "calibration": calibration,
        "im_method": im_method,
        "readout": readout,
        "level_widths": list(params.level_widths) if params.level_widths else None,
        "window_widths": window_widths,
        "suppression_floor": suppression_floor,
        "alpha": params.alpha,
        "cubic_correction": params.cubic_correction,
        "labels": list(labels),
        "population_overlap_condition": float(np.linalg.cond(population_overlap(params.with_alpha(0.0)))),
        "trace": {"min": float(pops.sum(axis=1).min()), "max": float(pops.sum(axis=1).max())},
        "skipped_pairs": [[labels[i], labels[j]] for i, j in coh.skipped],
        "flags": flags,
        "pairs": [
            {
                "i": labels[i],
                "j": labels[j],
                "p_ij": params.momentum(i, j),
                "suppression": suppression(params, i, j),
                "subtracted_background": coh.background[:, c].tolist(),
                "population_background": coh.population_background[:, c].tolist(),
                "slice_fit_re": coh.slice_fit[:, c].real.tolist(),
                "point_re": coh.point_re[:, c].tolist(),
            }
            for c, (i, j) in enumerate(coh.pairs)
        ],
        "tau": spec_on.tau.tolist(),
    }
    return ReconstructionResult(density, pops, coh, audit, flags)


class DensityMatrixReconstructor(BaseEstimator):
    """Estimator wrapper around :func:`reconstruct`.

    ``fit`` runs the THz-free population pass; ``transform`` runs the
    coherence pass on a THz-on spectrogram and returns the reconstructed
    :class:`DensityMatrixSeries`.

    Args:
        ionization_potentials: ``I_p`` of every level (a.u.).
        cubic_correction: Include the cubic streaking-action correction.
        level_widths: Amplitude decay rate per level for the peak model.
        calibration: ``"absolute"`` or ``"self"``.
        reference_tau: Delay for self-calibration.
        window_widths: Fit window half-width in peak widths.
        suppression_floor: Minimum measurable coherence suppression factor.
        im_method: ``"fit"`` or ``"hilbert"``.
        readout: ``"slice"`` or ``"point"``.
        pairs: Coherence pairs to reconstruct (default all measurable).
        labels: Level labels for the output.
    """

    def __init__(
        self, ionization_potentials=None, cubic_correction=True, level_widths=None,
        calibration="absolute", reference_tau=None, window_widths=3.0,
        suppression_floor=SUPPRESSION_FLOOR, im_method="fit", readout="slice", pairs=None, labels=None,
    ):
        self.ionization_potentials = ionization_potentials
        self.cubic_correction = cubic_correction
        self.level_widths = level_widths
        self.calibration = calibration
        self.reference_tau = reference_tau
        self.window_widths = window_widths
        self.suppression_floor = suppression_floor
        self.im_method = im_method
        self.readout = readout
        self.pairs = pairs
        self.labels = labels

    def _params(self, spec):
        if self.ionization_potentials is None:
            raise ConfigError("ionization_potentials must be set")
        return params_from_spectrogram(
            spec, self.ionization_potentials, self.cubic_correction, self.level_widths
        )

    def fit(self, spec_off, y=None):
        check_spectrogram(spec_off)
        self.params_off_ = self._params(spec_off).with_alpha(0.0)
        self.populations_ = extract_populations(
            spec_off, self.params_off_, calibration=self.calibration, reference_tau=self.reference_tau
        )
        self.tau_ = spec_off.tau
        self.spec_off_ = spec_off
        return self

    def transform(self, spec_on) -> DensityMatrixSeries:
        check_is_fitted(self, "populations_")
        self.result_ = reconstruct(
            self.spec_off_, spec_on, self._params(spec_on), self.pairs, self.labels,
            self.calibration, self.reference_tau, self.window_widths,
            self.suppression_floor, self.im_method, self.readout,
        )
        return self.result_.density

    def fit_transform(self, spec_off, spec_on):
        return self.fit(spec_off).transform(spec_on)


class PhaseReadout(BaseEstimator):
    """Single-delay phase readout as an estimator: ``fit(spec_on)``, ``transform(taus)``."""

    def __init__(self, pair=(0, 1), ionization_potentials=None, cubic_correction=True,
                 window_widths=3.0, noise_floor=1e-3):
        self.pair = pair
        self.ionization_potentials = ionization_potentials
        self.cubic_correction = cubic_correction
        self.window_widths = window_widths
        self.noise_floor = noise_floor

    def fit(self, spec_on, y=None):
        check_spectrogram(spec_on)
        if self.ionization_potentials is None:
            raise ConfigError("ionization_potentials must be set")
        self.params_ = params_from_spectrogram(spec_on, self.ionization_potentials, self.cubic_correction)
        self.spec_ = spec_on
        return self

    def transform(self, taus) -> np.ndarray:
        check_is_fitted(self, "params_")
        self.results_ = [
            extract_phase(self.spec_, float(t), self.pair, self.params_,
                          window_widths=self.window_widths, noise_floor=self.noise_floor)
            for t in np.atleast_1d(taus)
        ]
        return np.array([r.phi for r in self.results_])


def write_density_tsv(path, density: DensityMatrixSeries, time_origin=0.0, header_lines=()):
    """``tau`` then ``Re``/``Im`` of every element with ``i <= j``."""
    n = density.n_levels
    labels = density.labels or tuple(str(k) for k in range(n))
    cols = ["tau"]
    for i in range(n):
        for j in range(i, n):
            cols += [f"re_{labels[i]}_{labels[j]}", f"im_{labels[i]}_{labels[j]}"]
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"# provenance = {density.provenance}")
    lines.append(f"# time_origin = {float(time_origin)!r}")
    lines.append("\t".join(cols))
    for k, t in enumerate(density.tau):
        vals = [repr(float(t - time_origin))]
        for i in range(n):
            for j in range(i, n):
                z = density.rho[k, i, j]
                vals += [repr(float(z.real)), repr(float(z.imag))]
        lines.append("\t".join(vals))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_density_tsv(path) -> DensityMatrixSeries:
    meta, rows, cols = {}, [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if " = " in text:
                    key, value = text.split(" = ", 1)
                    meta[key] = value
            elif cols is None:
                cols = line.rstrip("\n").split("\t")
            elif line.strip():
                rows.append([float(x) for x in line.split("\t")])
    data = np.array(rows)
    labels = []
    for c in cols[1::2]:
        _, a, b = c.split("_", 2)
        if a == b:
            labels.append(a)
    n = len(labels)
    rho = np.zeros((data.shape[0], n, n), dtype=complex)
    c = 1
    for i in range(n):
        for j in range(i, n):
            rho[:, i, j] = data[:, c] + 1j * data[:, c + 1]
            rho[:, j, i] = np.conj(rho[:, i, j])
            c += 2
    tau = data[:, 0] + float(meta.get("time_origin", 0.0))
    return DensityMatrixSeries(tau, rho, meta.get("provenance", "reconstructed"), tuple(labels))


def write_audit_json(path, result: ReconstructionResult):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_audit_json() + "\n")
