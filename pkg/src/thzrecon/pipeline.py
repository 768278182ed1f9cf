"""Pipeline stages behind the command line.

Every stage writes plain files into the output directory and reuses the files
of earlier stages when their recorded config hash matches the current
scenario; otherwise the upstream stage is recomputed in memory first.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    TrajectoryEnsemble,
    ensemble_density_matrix,
    lindblad_propagate,
    propagate_schrodinger,
    simulate_ensemble,
)
from .exceptions import ConfigError
from .model import format_peak_table, model_spectrogram
from .reconstruction import extract_phase, reconstruct, write_audit_json, write_density_tsv
from .scenario import Scenario
from .sfa import Spectrogram, spectrogram

log = logging.getLogger(__name__)

ENSEMBLE_FILE = "ensemble.npz"
TRUTH_FILE = "truth_density.tsv"
SPEC_FILES = {"on": "spectrogram_on.tsv", "off": "spectrogram_off.tsv"}
MODEL_FILES = {"on": "model_spectrogram_on.tsv", "off": "model_spectrogram_off.tsv"}
PEAK_FILE = "peak_table.tsv"
RECON_FILE = "reconstructed_density.tsv"
AUDIT_FILE = "audit.json"
PHASE_FILE = "phase.tsv"
SLICE_DELAY_FILE = "slices_delay.tsv"
SLICE_MOMENTUM_FILE = "slices_momentum.tsv"
ORACLE_FILE = "lindblad_density.tsv"
VALIDATION_FILE = "validation.json"


@dataclass
class RunContext:
    scenario: Scenario
    out_dir: Path
    n_jobs: int = 1

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self._cache: dict = {}

    @property
    def config_hash(self) -> str:
        return self.scenario.config_hash()

    def header(self) -> list[str]:
        s = self.scenario
        return [
            f"generator = thzrecon {__version__}",
            f"scenario = {s.name}",
            f"config_sha256 = {self.config_hash}",
            f"seed = {s.seed}",
            f"quick = {'true' if s.quick else 'false'}",
        ]

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name


def _npz_hash(path: Path) -> str | None:
    if not path.exists():
        return None
    with np.load(path) as data:
        return str(data["config_sha256"]) if "config_sha256" in data.files else None


# -- simulate ---------------------------------------------------------------


def compute_ensemble(ctx: RunContext) -> TrajectoryEnsemble:
    s = ctx.scenario
    system = s.level_system()
    t = s.time_grid()
    if system.has_decay:
        return simulate_ensemble(
            system, t, s.n_trajectories, s.seed, n_jobs=ctx.n_jobs, jump_rule=s.jump_rule
        )
    traj = propagate_schrodinger(system, t)
    amps = np.repeat(traj.amplitudes[None], s.n_trajectories, axis=0)
    return TrajectoryEnsemble(t, amps, [()] * s.n_trajectories, s.seed, system.labels, system.energies)


def stage_simulate(ctx: RunContext) -> TrajectoryEnsemble:
    ens = compute_ensemble(ctx)
    ens.save(ctx.path(ENSEMBLE_FILE), {"config_sha256": np.array(ctx.config_hash)})
    truth = ensemble_density_matrix(ens, ctx.scenario.delays())
    write_density_tsv(ctx.path(TRUTH_FILE), truth, ctx.scenario.time_origin, ctx.header())
    ctx._cache["ensemble"] = ens
    return ens


def get_ensemble(ctx: RunContext) -> TrajectoryEnsemble:
    if "ensemble" in ctx._cache:
        return ctx._cache["ensemble"]
    path = ctx.out_dir / ENSEMBLE_FILE
    if _npz_hash(path) == ctx.config_hash:
        ens = TrajectoryEnsemble.load(path)
    else:
        log.info("computing trajectory ensemble")
        ens = compute_ensemble(ctx)
    ctx._cache["ensemble"] = ens
    return ens


def truth_density(ctx: RunContext):
    if "truth" not in ctx._cache:
        ctx._cache["truth"] = ensemble_density_matrix(get_ensemble(ctx), ctx.scenario.delays())
    return ctx._cache["truth"]


# -- spectrogram --------------------------------------------------------------


def compute_spectrogram(ctx: RunContext, which: str) -> Spectrogram:
    s = ctx.scenario
    fields = s.fields()
    if which == "off":
        fields = fields.without_thz()
    elif not fields.thz_on:
        raise ConfigError("scenario has no [thz] table; a THz-on spectrogram is impossible")
    meta = {"config_sha256": ctx.config_hash, "seed": s.seed, "scenario": s.name, "time_origin": s.time_origin}
    return spectrogram(get_ensemble(ctx), fields, s.momenta(), s.delays(), n_jobs=ctx.n_jobs, metadata=meta)


def stage_spectrogram(ctx: RunContext, which=("on", "off")) -> dict:
    out = {}
    for w in which:
        spec = compute_spectrogram(ctx, w)
        spec.save_tsv(ctx.path(SPEC_FILES[w]), ctx.scenario.time_origin, ctx.header()[:1])
        ctx._cache[f"spec_{w}"] = spec
        out[w] = spec
    return out


def get_spectrogram(ctx: RunContext, which: str) -> Spectrogram:
    key = f"spec_{which}"
    if key in ctx._cache:
        return ctx._cache[key]
    path = ctx.out_dir / SPEC_FILES[which]
    spec = None
    if path.exists():
        loaded = Spectrogram.load_tsv(path)
        if str(loaded.metadata.get("config_sha256")) == ctx.config_hash:
            spec = loaded
    if spec is None:
        log.info("computing THz-%s spectrogram", which)
        spec = compute_spectrogram(ctx, which)
    ctx._cache[key] = spec
    return spec


# -- model ------------------------------------------------------------------


def stage_model(ctx: RunContext):
    s = ctx.scenario
    system = s.level_system()
    params = s.model_params()
    with open(ctx.path(PEAK_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_peak_table(params, system.labels, ctx.header()))
    truth = truth_density(ctx)
    p = s.momenta()
    variants = {"on": params} if s.fields().thz_on else {}
    variants["off"] = s.model_params(thz_on=False).with_alpha(0.0)
    for which, par in variants.items():
        w = model_spectrogram(truth, par, p)
        meta = {
            "config_sha256": ctx.config_hash,
            "seed": s.seed,
            "scenario": s.name,
            "time_origin": s.time_origin,
            "thz_on": which == "on",
            "alpha": par.alpha,
            "xuv_e0": par.e0,
            "xuv_omega": par.omega,
            "xuv_sigma": par.sigma,
            "source": "analytic-model",
        }
        Spectrogram(p, truth.tau, np.clip(w, 0.0, None), meta).save_tsv(
            ctx.path(MODEL_FILES[which]), s.time_origin, ctx.header()[:1]
        )


# -- reconstruct / phase / slice ---------------------------------------------


def stage_reconstruct(ctx: RunContext):
    s = ctx.scenario
    params = s.model_params()
    opts = s.reconstruction_options()
    result = reconstruct(
        get_spectrogram(ctx, "off"), get_spectrogram(ctx, "on"), params,
        labels=s.level_system().labels, **opts,
    )
    result.audit["config_sha256"] = ctx.config_hash
    result.audit["seed"] = s.seed
    result.audit["time_origin"] = s.time_origin
    write_density_tsv(ctx.path(RECON_FILE), result.density, s.time_origin, ctx.header())
    write_audit_json(ctx.path(AUDIT_FILE), result)
    return result


def stage_phase(ctx: RunContext, delays=None):
    s = ctx.scenario
    params = s.model_params()
    i, j = s.phase_pair()
    labels = s.level_system().labels
    delays = s.phase_delays() if delays is None else delays
    spec = get_spectrogram(ctx, "on")
    rows = []
    for tau in delays:
        r = extract_phase(spec, float(tau), (i, j), params, window_widths=s.reconstruction_options()["window_widths"])
        rows.append((tau, r))
    lines = [f"# {h}" for h in ctx.header()]
    lines.append(f"# pair = {labels[i]} {labels[j]}")
    lines.append(f"# time_origin = {s.time_origin!r}")
    lines.append("tau\tphi\tamplitude\tre_rho\tim_rho\tresidual")
    for tau, r in rows:
        lines.append(
            f"{float(tau - s.time_origin)!r}\t{r.phi!r}\t{r.amplitude!r}\t"
            f"{r.rho_ij.real!r}\t{r.rho_ij.imag!r}\t{r.residual!r}"
        )
    with open(ctx.path(PHASE_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows


def stage_slice(ctx: RunContext, delays=None):
    """``w(p_ij; tau)`` columns for every element and ``w(p; tau)`` rows at fixed delays."""
    s = ctx.scenario
    params = s.model_params()
    labels = s.level_system().labels
    n = len(labels)
    specs = {w: get_spectrogram(ctx, w) for w in (("on", "off") if s.fields().thz_on else ("off",))}
    elems = [(i, j) for i in range(n) for j in range(i, n)]
    head = [f"# {h}" for h in ctx.header()] + [f"# time_origin = {s.time_origin!r}"]
    cols = ["tau"]
    data = [specs["off"].tau - s.time_origin]
    for which, spec in specs.items():
        for i, j in elems:
            p_ij = params.momentum(i, j)
            if spec.p[0] <= p_ij <= spec.p[-1]:
                cols.append(f"w_{which}_{labels[i]}_{labels[j]}")
                data.append(spec.column(p_ij))
    lines = head + ["\t".join(cols)]
    for row in np.column_stack(data):
        lines.append("\t".join(repr(float(x)) for x in row))
    with open(ctx.path(SLICE_DELAY_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    delays = s.phase_delays() if delays is None else delays
    cols = ["p"] + [f"w_{w}_{float(t - s.time_origin)!r}" for t in delays for w in specs]
    data = [specs["off"].p] + [specs[w].row(t) for t in delays for w in specs]
    lines = head + ["\t".join(cols)]
    for row in np.column_stack(data):
        lines.append("\t".join(repr(float(x)) for x in row))
    with open(ctx.path(SLICE_MOMENTUM_FILE), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# -- validate ---------------------------------------------------------------


def validation_report(ctx: RunContext) -> dict:
    s = ctx.scenario
    system = s.level_system()
    params = s.model_params()
    t = s.time_grid()
    return {
        "scenario": s.name,
        "config_sha256": ctx.config_hash,
        "seed": s.seed,
        "quick": s.quick,
        "levels": list(system.labels),
        "ionization_potentials": [float(x) for x in system.ionization_potentials],
        "xuv_sigma": s.fields().xuv.sigma,
        "alpha": params.alpha,
        "time_grid": {"start": float(t[0]), "stop": float(t[-1]), "dt": s.dt, "points": int(t.size)},
        "delays": {"count": int(s.delays().size), "settled_from": s.settled_delay() - s.time_origin},
        "momenta": {"count": int(s.momenta().size)},
        "has_decay": system.has_decay,
    }


def stage_validate(ctx: RunContext, oracle: bool = False) -> dict:
    report = validation_report(ctx)
    if oracle:
        s = ctx.scenario
        system = s.level_system()
        tau = s.delays()
        lind = lindblad_propagate(system, tau[tau >= system.t0])
        truth = truth_density(ctx)
        keep = tau >= system.t0
        dev = float(np.max(np.abs(truth.rho[keep] - lind.rho)))
        report["oracle"] = {
            "max_abs_deviation": dev,
            "n_trajectories": s.n_trajectories,
            "statistical_scale": 3.0 / np.sqrt(s.n_trajectories),
        }
        write_density_tsv(ctx.path(ORACLE_FILE), lind, s.time_origin, ctx.header())
        with open(ctx.path(VALIDATION_FILE), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=1) + "\n")
    return report


STAGES = ("simulate", "spectrogram", "model", "reconstruct", "phase", "slice")


def run_all(ctx: RunContext):
    stage_simulate(ctx)
    stage_spectrogram(ctx, ("on", "off") if ctx.scenario.fields().thz_on else ("off",))
    stage_model(ctx)
    if ctx.scenario.fields().thz_on:
        stage_reconstruct(ctx)
        stage_phase(ctx)
    stage_slice(ctx)
