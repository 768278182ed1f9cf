"""Scenario files: a TOML document with explicit units, validated into model objects.

A scenario has the tables ``[scenario]``, ``[levels]``, ``[[couplings]]``,
``[[channels]]``, ``[xuv]``, ``[thz]``, ``[grids]``, ``[reconstruction]`` and an
optional ``[quick]`` table whose entries override the others when the quick
profile is requested. See the README for the full schema.

All delays in the file are given relative to ``scenario.time_origin``; the
level start time ``levels.t0`` and coupling centers are absolute.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import CouplingPulse, JumpChannel, LevelSystem, check_resolution
from .exceptions import ConfigError
from .model import PeakModelParams, suppression
from .reconstruction import MIN_FRINGE_SAMPLES
from .sfa import WINDOW_SIGMAS, MomentumGrid
from .units import (
    ENERGY_UNITS,
    FIELD_UNITS,
    FREQUENCY_UNITS,
    TIME_UNITS,
    FieldConfig,
    ThzPulse,
    UnitSystem,
    XuvPulse,
    fwhm_to_sigma,
)

SCHEMA_VERSION = 1
SHIPPED = ("two_level", "four_level")

_DEFAULTS = {
    "scenario": {"time_origin": 0.0, "seed": 0, "n_trajectories": 1, "jump_rule": "collapse"},
    "levels": {"energy_unit": "au", "t0": 0.0, "time_unit": "au"},
    "xuv": {"field_unit": "au", "energy_unit": "au", "duration_unit": "fs", "duration_kind": "fwhm"},
    "grids": {"time_unit": "au"},
    "reconstruction": {
        "cubic_correction": True,
        "use_level_widths": True,
        "calibration": "absolute",
        "im_method": "fit",
        "readout": "slice",
        "window_widths": 3.0,
        "suppression_floor": 1e-3,
        "settle_widths": 3.0,
        "settle_sigmas": 2.0,
    },
}
_THZ_DEFAULTS = {"field_unit": "au", "frequency_unit": "THz", "envelope": "sin2", "envelope_cycles": 2.0}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key {where}.{key}")
    return table[key]


def _number(table, key, where, positive=False, nonneg=False, default=None):
    value = table.get(key, default) if default is not None else _require(table, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}.{key} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}.{key} must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{where}.{key} must be non-negative, got {value!r}")
    return float(value)


def _unit(table, key, allowed, where):
    value = table.get(key)
    if value not in allowed:
        raise ConfigError(f"{where}.{key} must be one of {list(allowed)}, got {value!r}")
    return value


def _number_list(table, key, where, length=None):
    value = _require(table, key, where)
    if not isinstance(value, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in value
    ):
        raise ConfigError(f"{where}.{key} must be a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(f"{where}.{key} needs {length} entries, got {len(value)}")
    return [float(x) for x in value]


def _axis(start, stop, step, where):
    if step <= 0 or stop < start:
        raise ConfigError(f"{where}: need step > 0 and stop >= start")
    n = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(n), 12)


@dataclass(frozen=True)
class Scenario:
    """Validated scenario. ``config`` holds the normalized document."""

    config: dict
    quick: bool = False

    # -- construction ----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, quick: bool = False, seed: int | None = None) -> "Scenario":
        doc = copy.deepcopy(doc)
        overrides = doc.pop("quick", {})
        if not isinstance(overrides, dict):
            raise ConfigError("[quick] must be a table")
        version = doc.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        unknown = set(doc) - {"scenario", "levels", "couplings", "channels", "xuv", "thz", "grids", "reconstruction"}
        if unknown:
            raise ConfigError(f"unknown tables {sorted(unknown)}")
        base = _merge(_DEFAULTS, doc)
        if "thz" in doc:
            base["thz"] = _merge(_THZ_DEFAULTS, doc["thz"])
        base.setdefault("couplings", [])
        base.setdefault("channels", [])
        if quick:
            base = _merge(base, overrides)
        if seed is not None:
            base["scenario"]["seed"] = int(seed)
        base["quick_overrides"] = overrides
        scenario = cls(base, quick)
        scenario.validate()
        return scenario

    @classmethod
    def from_toml(cls, text: str, quick: bool = False, seed: int | None = None) -> "Scenario":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config is not valid TOML: {exc}") from None
        return cls.from_dict(doc, quick, seed)

    @classmethod
    def load(cls, path, quick: bool = False, seed: int | None = None) -> "Scenario":
        return cls.from_toml(read_config_text(path), quick, seed)

    def to_dict(self) -> dict:
        """Document that reproduces this scenario (quick overrides already applied)."""
        doc = copy.deepcopy(self.config)
        doc.pop("quick_overrides", None)
        doc["schema_version"] = SCHEMA_VERSION
        return doc

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_toml().encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.config_hash())

    # -- sections --------------------------------------------------------

    @property
    def name(self) -> str:
        return str(self.config["scenario"].get("name", "scenario"))

    @property
    def seed(self) -> int:
        seed = self.config["scenario"]["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"scenario.seed must be a non-negative integer, got {seed!r}")
        return seed

    @property
    def n_trajectories(self) -> int:
        n = self.config["scenario"]["n_trajectories"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError(f"scenario.n_trajectories must be an integer >= 1, got {n!r}")
        return n

    @property
    def jump_rule(self) -> str:
        return _unit(self.config["scenario"], "jump_rule", ("collapse", "transfer"), "scenario")

    @property
    def time_origin(self) -> float:
        return _number(self.config["scenario"], "time_origin", "scenario")

    def level_system(self) -> LevelSystem:
        lv = self.config["levels"]
        eu = _unit(lv, "energy_unit", ENERGY_UNITS, "levels")
        tu = _unit(lv, "time_unit", TIME_UNITS, "levels")
        energies = [UnitSystem.energy(e, eu) for e in _number_list(lv, "energies", "levels")]
        n = len(energies)
        labels = lv.get("labels", [str(i) for i in range(n)])
        if not isinstance(labels, list) or len(labels) != n or not all(isinstance(x, str) and x for x in labels):
            raise ConfigError("levels.labels must list one non-empty string per level")
        if any("_" in x or "\t" in x for x in labels):
            raise ConfigError("level labels must not contain '_' or tabs")
        pops = _number_list(lv, "populations", "levels", n)
        phases = _number_list(lv, "phases", "levels", n) if "phases" in lv else [0.0] * n
        couplings = []
        for k, c in enumerate(self.config["couplings"]):
            where = f"couplings[{k}]"
            cu = _unit(c, "time_unit", TIME_UNITS, where) if "time_unit" in c else tu
            width = c.get("width")
            couplings.append(
                CouplingPulse(
                    amplitude=_number(c, "amplitude", where),
                    center=UnitSystem.time(_number(c, "center", where, default=0.0), cu),
                    width=None if width is None else UnitSystem.time(_number(c, "width", where, positive=True), cu),
                    frequency=_number(c, "frequency", where, nonneg=True, default=0.0) / UnitSystem.time(1.0, cu),
                    phase=_number(c, "phase", where, default=0.0),
                )
            )
        channels = []
        for k, ch in enumerate(self.config["channels"]):
            where = f"channels[{k}]"
            try:
                src, tgt = labels.index(_require(ch, "source", where)), labels.index(_require(ch, "target", where))
            except ValueError:
                raise ConfigError(f"{where} refers to an unknown level label") from None
            rate = _number(ch, "rate", where, nonneg=True) * UnitSystem.time(1.0, tu) ** -1
            channels.append(JumpChannel(src, tgt, rate))
        pattern = lv.get("coupling_pattern")
        return LevelSystem.from_populations(
            energies, pops, phases,
            t0=UnitSystem.time(_number(lv, "t0", "levels"), tu),
            labels=tuple(labels),
            couplings=tuple(couplings),
            channels=tuple(channels),
            coupling_pattern=None if pattern is None else tuple(tuple(float(x) for x in row) for row in pattern),
        )

    def fields(self) -> FieldConfig:
        x = self.config["xuv"]
        e0 = UnitSystem.field(_number(x, "e0", "xuv", positive=True), _unit(x, "field_unit", FIELD_UNITS, "xuv"))
        omega = UnitSystem.energy(
            _number(x, "photon_energy", "xuv", positive=True), _unit(x, "energy_unit", ENERGY_UNITS, "xuv")
        )
        duration = UnitSystem.time(
            _number(x, "duration", "xuv", positive=True), _unit(x, "duration_unit", TIME_UNITS, "xuv")
        )
        kind = _unit(x, "duration_kind", ("fwhm", "sigma"), "xuv")
        sigma = fwhm_to_sigma(duration) if kind == "fwhm" else duration
        xuv = XuvPulse(e0, omega, sigma)
        thz = None
        if "thz" in self.config:
            t = self.config["thz"]
            if t.get("enabled", True):
                try:
                    thz = ThzPulse(
                        UnitSystem.field(_number(t, "e0", "thz", positive=True), _unit(t, "field_unit", FIELD_UNITS, "thz")),
                        UnitSystem.frequency(
                            _number(t, "frequency", "thz", positive=True),
                            _unit(t, "frequency_unit", FREQUENCY_UNITS, "thz"),
                        ),
                        envelope=_unit(t, "envelope", ("sin2", "gaussian"), "thz"),
                        envelope_cycles=_number(t, "envelope_cycles", "thz", positive=True),
                    )
                except ValueError as exc:
                    raise ConfigError(f"thz: {exc}") from None
        return FieldConfig(xuv, thz)

    def _grids(self):
        return self.config["grids"]

    def _tu(self):
        return _unit(self._grids(), "time_unit", TIME_UNITS, "grids")

    @property
    def dt(self) -> float:
        return UnitSystem.time(_number(self._grids(), "dt", "grids", positive=True), self._tu())

    def delay_offsets(self) -> np.ndarray:
        g = self._grids()
        tu = self._tu()
        return _axis(
            UnitSystem.time(_number(g, "delay_start", "grids"), tu),
            UnitSystem.time(_number(g, "delay_stop", "grids"), tu),
            UnitSystem.time(_number(g, "delay_step", "grids", positive=True), tu),
            "grids.delay",
        )

    def delays(self) -> np.ndarray:
        """Absolute delay grid (simulation time)."""
        return self._snap(self.time_origin + self.delay_offsets())

    def _snap(self, times):
        t0 = self.level_system().t0
        k = np.rint((np.asarray(times) - t0) / self.dt)
        snapped = t0 + k * self.dt
        if np.max(np.abs(snapped - times)) > 1e-6 * self.dt:
            raise ConfigError("delays must fall on the propagation grid (multiples of dt from levels.t0)")
        return snapped

    def momenta(self) -> np.ndarray:
        g = self._grids()
        return _axis(
            _number(g, "p_start", "grids", positive=True),
            _number(g, "p_stop", "grids", positive=True),
            _number(g, "p_step", "grids", positive=True),
            "grids.p",
        )

    def time_grid(self) -> np.ndarray:
        """Propagation grid covering every XUV window, aligned with ``levels.t0``.

        Systems with decay channels start at ``t0`` (trajectories are only
        propagated forward); closed systems may also be propagated backwards.
        """
        system = self.level_system()
        sigma = self.fields().xuv.sigma
        tau = self.delays()
        dt = self.dt
        lo = tau.min() - WINDOW_SIGMAS * sigma - 2 * dt
        hi = tau.max() + WINDOW_SIGMAS * sigma + 2 * dt
        k_lo = min(0, int(math.floor((lo - system.t0) / dt)))
        if system.has_decay and k_lo < 0:
            raise ConfigError(
                f"delays down to {tau.min() - self.time_origin:g} need the trajectory before levels.t0; "
                "systems with decay channels are propagated forward from t0 only"
            )
        k_hi = max(0, int(math.ceil((hi - system.t0) / dt)))
        return system.t0 + dt * np.arange(k_lo, k_hi + 1)

    def model_params(self, thz_on=True) -> PeakModelParams:
        r = self.config["reconstruction"]
        system = self.level_system()
        fields = self.fields() if thz_on else self.fields().without_thz()
        widths = None
        if r.get("use_level_widths", True) and system.has_decay:
            widths = tuple(0.5 * system.source_rates())
        return PeakModelParams.from_fields(
            fields, system.ionization_potentials, bool(r.get("cubic_correction", True)), widths
        )

    def reconstruction_options(self) -> dict:
        r = self.config["reconstruction"]
        return {
            "calibration": _unit(r, "calibration", ("absolute", "self"), "reconstruction"),
            "im_method": _unit(r, "im_method", ("fit", "hilbert"), "reconstruction"),
            "readout": _unit(r, "readout", ("slice", "point"), "reconstruction"),
            "window_widths": _number(r, "window_widths", "reconstruction", positive=True),
            "suppression_floor": _number(r, "suppression_floor", "reconstruction", positive=True),
        }

    def phase_pair(self):
        r = self.config["reconstruction"]
        labels = self.level_system().labels
        pair = r.get("phase_pair", list(labels[:2][::-1]))
        try:
            return labels.index(pair[0]), labels.index(pair[1])
        except (ValueError, IndexError, TypeError):
            raise ConfigError(f"reconstruction.phase_pair {pair!r} must name two levels") from None

    def phase_delays(self) -> np.ndarray:
        r = self.config["reconstruction"]
        offsets = r.get("phase_delays", [0.0])
        tu = self._tu()
        return self._snap(self.time_origin + np.array([UnitSystem.time(float(x), tu) for x in offsets]))

    def settled_delay(self) -> float:
        """First delay (absolute) whose XUV window clears all coupling pulses.

        Coupling pulse ``k`` is taken to end at ``center + settle_widths * width``;
        the probe reaches ``settle_sigmas`` XUV standard deviations back in time.
        """
        r = self.config["reconstruction"]
        system = self.level_system()
        ends = [c.center + r["settle_widths"] * c.width for c in system.couplings if c.width is not None]
        end = max(ends) if ends else system.t0
        return end + r["settle_sigmas"] * self.fields().xuv.sigma

    # -- validation ------------------------------------------------------

    def validate(self):
        """Check every section and the mutual consistency of the grids."""
        _ = self.seed, self.n_trajectories, self.jump_rule
        system = self.level_system()
        fields = self.fields()
        check_resolution(system, self.dt)
        self.reconstruction_options()
        tau = self.delays()
        p = self.momenta()
        self.time_grid()
        params = self.model_params()
        floor = self.reconstruction_options()["suppression_floor"]
        n = system.n_levels
        measurable = [(i, j) for i in range(n) for j in range(i + 1, n) if suppression(params, i, j) >= floor]
        MomentumGrid(p).check_fringes(params, measurable or [(0, 0)], samples=MIN_FRINGE_SAMPLES)
        for i in range(system.n_levels):
            if fields.xuv.omega <= system.ionization_potentials[i]:
                raise ConfigError(f"XUV photon energy below the ionization potential of level {system.labels[i]}")
            pi = params.momentum(i, i)
            if not (p[0] <= pi <= p[-1]):
                raise ConfigError(f"momentum grid [{p[0]}, {p[-1]}] misses p_ii={pi:.4f} of level {system.labels[i]}")
        self.phase_pair()
        self.phase_delays()
        if tau.size < 1:
            raise ConfigError("empty delay grid")


def shipped_config_path(name: str) -> Path:
    return Path(str(resources.files("thzrecon.scenarios").joinpath(f"{name}.cfg")))


def read_config_text(path) -> str:
    """Read a scenario file; bare names of shipped scenarios are resolved too."""
    p = Path(path)
    if not p.exists() and str(path) in SHIPPED:
        p = shipped_config_path(str(path))
    try:
        return p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
