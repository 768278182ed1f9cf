"""Command-line entry point: ``thzrecon <stage> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .exceptions import ThzReconError
from .pipeline import (
    RunContext,
    run_all,
    stage_model,
    stage_phase,
    stage_reconstruct,
    stage_simulate,
    stage_slice,
    stage_spectrogram,
    stage_validate,
)
from .scenario import Scenario

EXIT_CODES = {
    "config-invalid": 2,
    "under-resolved-grid": 3,
    "coverage": 4,
    "fit-failure": 5,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thzrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario file, or a shipped name (two_level, four_level)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override scenario.seed")
        p.add_argument("--quick", action="store_true", help="apply the [quick] profile")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    add("simulate", "propagate the trajectory ensemble")
    p = add("spectrogram", "compute THz-on and/or THz-off spectrograms")
    p.add_argument("--thz", choices=("on", "off", "both"), default="both")
    add("model", "write the analytic peak table and model spectrograms")
    add("reconstruct", "two-pass density-matrix reconstruction")
    p = add("phase", "single-delay phase readout")
    p.add_argument("--delay", type=float, action="append", help="delay relative to the time origin (repeatable)")
    p = add("slice", "plot-ready columns w(p_ij; tau) and rows w(p; tau)")
    p.add_argument("--delay", type=float, action="append", help="delay for momentum slices (repeatable)")
    p = add("validate", "check the scenario; --oracle also compares the ensemble with the master equation")
    p.add_argument("--oracle", action="store_true")
    add("run", "run every stage")
    return parser


def _report_error(exc: ThzReconError) -> int:
    payload = {"error": exc.category, "message": str(exc)}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return EXIT_CODES.get(exc.category, 1)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        # Full validation happens here, before anything is written.
        scenario = Scenario.load(args.config, quick=args.quick, seed=args.seed)
        ctx = RunContext(scenario, args.out, n_jobs=args.jobs)
        cmd = args.command
        if cmd == "simulate":
            stage_simulate(ctx)
        elif cmd == "spectrogram":
            stage_spectrogram(ctx, ("on", "off") if args.thz == "both" else (args.thz,))
        elif cmd == "model":
            stage_model(ctx)
        elif cmd == "reconstruct":
            stage_reconstruct(ctx)
        elif cmd == "phase":
            stage_phase(ctx, _abs_delays(scenario, args.delay))
        elif cmd == "slice":
            stage_slice(ctx, _abs_delays(scenario, args.delay))
        elif cmd == "validate":
            report = stage_validate(ctx, oracle=args.oracle)
            print(json.dumps(report, sort_keys=True, indent=1))
        elif cmd == "run":
            run_all(ctx)
    except ThzReconError as exc:
        return _report_error(exc)
    return 0


def _abs_delays(scenario: Scenario, offsets):
    if not offsets:
        return None
    return scenario._snap(scenario.time_origin + np.asarray(offsets, dtype=float))


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
