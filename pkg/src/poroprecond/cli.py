"""Command line interface.

Exit codes: 0 success, 1 failed invariant (``check``), 2 case/parse error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .cases.config import CaseParseError, parse_case
from .cases.model import build_case, initial_state, refine_case, run_case
from .cases.output import OutputError, OutputWriter, write_stats
from .cases.raster import RasterError
from .cases.staircase import write_staircase
from .solver import SimulationAborted

log = logging.getLogger("poroprecond")

EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_SOLVER = 0, 1, 2, 3
WELL_DATUM_NOTE = "delta_bhp is relative to the initial pressure at each well's topmost perforation"


def resolve_case_path(name: str) -> Path:
    """Existing paths win; otherwise bare names are looked up in the bundled cases."""
    p = Path(name)
    if p.exists() or p.parent != Path("."):
        return p
    bundled = resources.files("poroprecond") / "data" / name
    if bundled.is_file():
        return Path(str(bundled))
    return p


def _load(args):
    case = parse_case(resolve_case_path(args.case))
    if getattr(args, "levels", 0):
        case = refine_case(case, args.levels)
    if getattr(args, "tol", None) is not None:
        case.linear.tol = args.tol
    if getattr(args, "precond", None):
        case.precond.cpr_mode = args.precond
    if getattr(args, "second_stage", None):
        case.precond.second_stage = args.second_stage
    if getattr(args, "compare_richardson", False):
        case.linear.compare_richardson = True
    return case


def cmd_run(args) -> int:
    try:
        case = _load(args)
        setup = build_case(case)
    except (CaseParseError, RasterError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(args.out) if args.out else Path(f"{case.name}_out")
    m = setup.model
    n_dof = m.n_u + 2 * m.n_cells
    print(f"case {case.name}: {m.n_cells} cells, {n_dof} unknowns")
    try:
        writer = OutputWriter(out, m, case.output.stride, case.output.vtk, case.name)
    except OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    t0 = time.perf_counter()

    def progress(step, state, rec):
        writer(step, state, rec)
        if not args.quiet:
            print(f"step {step:4d} t={state.t:9.4f} dt={rec.dt:7.4f} newton={rec.newton_iterations}"
                  f" gmres={rec.linear_iterations}", flush=True)

    try:
        state0 = initial_state(setup)
        writer.snapshot(0, state0)
        result = run_case(setup, state0, progress, t_end=args.t_end)
    except (SimulationAborted, FloatingPointError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    meta = {"case": case.name, "cells": m.n_cells, "unknowns": n_dof,
            "units": f"{case.units.pressure}, {case.units.time}",
            "precond": f"{case.precond.cpr_mode}/{case.precond.second_stage}",
            "linear_tol": case.linear.tol, "well_datum": WELL_DATUM_NOTE,
            "mech_amg_setup_time": f"{result.mech_setup_time:.6g}",
            "wall_time": f"{time.perf_counter() - t0:.6g}"}
    try:
        summary = write_stats(out / "stats.csv", result.records, meta)
        if args.plots:
            from .plotting import plot_field_slice, plot_iteration_history
            plot_iteration_history(result.records, out / "iterations.png", case.name)
            plot_field_slice(m.grid, result.state.s, "z", path=out / "saturation.png",
                             label="saturation")
            plot_field_slice(m.grid, result.state.p, "z", path=out / "pressure.png",
                             label="pressure")
    except OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"done: {summary['accepted_steps']} steps, {summary['cuts']} cuts, "
          f"{summary['newton_per_step']:.2f} Newton/step, "
          f"{summary['gmres_per_newton']:.2f} GMRES/Newton; output in {out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        path = write_staircase(args.out, args.levels, args.base)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    print(path)
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks
    try:
        case = _load(args)
        setup = build_case(case)
    except (CaseParseError, RasterError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        results = run_checks(setup, seed=args.seed)
    except (FloatingPointError, RuntimeError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poroprecond",
                                 description="Coupled two-phase poromechanics simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--case", required=True,
                       help="case file, or the name of a bundled case")
        p.add_argument("--levels", type=int, default=0, help="uniform refinement levels")
        p.add_argument("--tol", type=float, default=None, help="linear tolerance")
        p.add_argument("--precond", choices=("quasi", "true", "rsl"), default=None,
                       help="CPR reduction / fixed-stress variant")
        p.add_argument("--second-stage", choices=("bgs", "ilu0"), default=None)
        p.add_argument("--threads", type=int, default=None, help="kernel threads")

    r = sub.add_parser("run", help="run a simulation")
    common(r)
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--t-end", type=float, default=None, help="override end time [day]")
    r.add_argument("--plots", action="store_true", help="write PNG figures")
    r.add_argument("--compare-richardson", action="store_true",
                   help="also run the Richardson iteration on every linear system")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen-staircase", help="write a staircase case and region raster")
    g.add_argument("--levels", type=int, default=0)
    g.add_argument("--base", type=int, default=10, help="cells per axis at level 0")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("check", help="run the invariant suite on a case")
    common(c)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
