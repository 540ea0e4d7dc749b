"""Command-line interface.

Subcommands:
  solve            uniform-level convergence study (or a single solve)
  adapt            adaptive Doerfler-marking loop
  uniform-study    refinement loop in uniform mode (same outputs as adapt)
  assumption1      boundary-interpolation decay study in the polynomial degree
  dump-system      write the condensed matrix/right-hand side (Matrix Market)

All runs write history.csv and run.json into --out; outputs are byte-identical
across repeated invocations unless --timing is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adapt as adapt_mod
from .adapt import AdaptConfig, RunRecord, fit_slope, run_loop, \
    save_history_csv, save_history_json
from .estimator import estimate, save_indicators
from .local_ops import HHOConfig
from .mesh import build_structured, load_text, save_text, uniform_refine
from .problems import assumption1_study, get_problem
from .system import SolverError, solve_problem

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3


class ConfigError(Exception):
    pass


def _add_common(p):
    p.add_argument("--problem", default="lshape",
                   help="problem name (lshape, square-smooth, poly-<n>)")
    p.add_argument("--k", type=int, default=0, help="face polynomial degree")
    p.add_argument("--variant", default="standard",
                   choices=["standard", "hho-a"])
    p.add_argument("--bound", default="B", choices=["A", "B"],
                   help="which upper bound to report as the estimator")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--mesh", default=None,
                   help="path to a mesh file overriding the built-in mesh")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (results are order-independent)")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock seconds (breaks byte-identical "
                        "output)")
    p.add_argument("--dump-indicators", action="store_true")
    p.add_argument("--dump-mesh", action="store_true")
    p.add_argument("--dump-system", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hho2d",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="uniform-level convergence study")
    _add_common(p)
    p.add_argument("--uniform", type=int, default=0, metavar="N",
                   help="number of uniform refinement levels after the "
                        "initial one (each level halves the mesh size)")
    p.add_argument("--initial-n", type=int, default=4,
                   help="structured initial mesh subdivision")

    for name in ("adapt", "uniform-study"):
        p = sub.add_parser(name, help=f"{name} refinement loop")
        _add_common(p)
        p.add_argument("--theta", type=float, default=0.30)
        p.add_argument("--max-iter", type=int, default=25)
        p.add_argument("--dof-budget", type=int, default=200_000)
        p.add_argument("--initial-n", type=int, default=2,
                       help="structured initial mesh subdivision")

    p = sub.add_parser("assumption1",
                       help="interpolation decay study in the degree")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--kmax", type=int, default=14)
    p.add_argument("--levels", type=int, default=24,
                   help="graded-quadrature levels")
    p.add_argument("--out", default=".")

    p = sub.add_parser("dump-system", help="dump the condensed linear system")
    _add_common(p)
    p.add_argument("--initial-n", type=int, default=4,
                   help="structured initial mesh subdivision")
    return ap


def _initial_mesh(args, problem):
    if args.mesh:
        return load_text(args.mesh)
    return build_structured(problem.domain, args.initial_n)


def _echo_config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items())}
    return cfg


def _write_run_json(outdir: Path, args, records, extra=None):
    dofs = [r.dofs for r in records]
    summary = {
        "iterations": len(records),
        "final_dofs": records[-1].dofs if records else 0,
        "final_ncells": records[-1].ncells if records else 0,
        "slope_energy_error": fit_slope(dofs, [r.energy_error for r in records]),
        "slope_bound_A": fit_slope(dofs, [r.bound_A for r in records]),
        "slope_bound_B": fit_slope(dofs, [r.bound_B for r in records]),
    }
    if extra:
        summary.update(extra)
    payload = {"config": _echo_config(args), "summary": summary}
    with open(outdir / "run.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _dumps(args, outdir: Path, result):
    it = result.records[-1].iter if result.records else 0
    if args.dump_indicators and result.breakdown is not None:
        save_indicators(result.breakdown, outdir / f"indicators_{it}.csv")
    if args.dump_mesh:
        save_text(result.solution.mesh if result.solution is not None
                  else result.mesh, outdir / f"mesh_{it}.txt")
    if args.dump_system and result.solution is not None:
        _dump_system_files(result.solution.mesh, args, outdir)


def _dump_system_files(mesh, args, outdir: Path):
    import scipy.io as sio

    from .system import assemble
    problem = get_problem(args.problem)
    cfg = HHOConfig(args.k, args.variant)
    A, b, dofmap, _, _, _ = assemble(mesh, cfg, problem)
    sio.mmwrite(str(outdir / "system.mtx"), A.tocoo())
    np.savetxt(outdir / "rhs.txt", b, fmt="%.17g")


def _run_solve(args) -> int:
    problem = get_problem(args.problem)
    cfg = HHOConfig(args.k, args.variant)
    mesh = _initial_mesh(args, problem)
    result = adapt_mod.run_levels(mesh, cfg, problem, args.uniform,
                                  bound=args.bound, timing=args.timing)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_history_csv(result.records, outdir / "history.csv")
    save_history_json(result.records, outdir / "history.json",
                      config=_echo_config(args))
    _write_run_json(outdir, args, result.records)
    _dumps(args, outdir, result)
    return EXIT_OK


def _run_adapt(args, mode: str) -> int:
    problem = get_problem(args.problem)
    cfg = HHOConfig(args.k, args.variant)
    mesh = _initial_mesh(args, problem)
    acfg = AdaptConfig(theta=args.theta, max_iter=args.max_iter,
                       dof_budget=args.dof_budget, mode=mode,
                       bound=args.bound)
    result = run_loop(mesh, cfg, problem, acfg, timing=args.timing)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_history_csv(result.records, outdir / "history.csv")
    save_history_json(result.records, outdir / "history.json",
                      config=_echo_config(args))
    _write_run_json(outdir, args, result.records)
    _dumps(args, outdir, result)
    return EXIT_OK


def _run_assumption1(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows, slope = assumption1_study(args.alpha, range(args.kmax + 1),
                                    levels=args.levels)
    with open(outdir / "assumption1.csv", "w") as fh:
        fh.write("alpha,k,error,fitted_slope\n")
        for k, err in rows:
            fh.write(f"{args.alpha:.17g},{k},{err:.17g},{slope:.17g}\n")
    payload = {"config": _echo_config(args),
               "summary": {"fitted_slope": slope}}
    with open(outdir / "run.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _run_dump_system(args) -> int:
    problem = get_problem(args.problem)
    mesh = _initial_mesh(args, problem)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_system_files(mesh, args, outdir)
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "solve":
            return _run_solve(args)
        if args.command == "adapt":
            return _run_adapt(args, "adaptive")
        if args.command == "uniform-study":
            return _run_adapt(args, "uniform")
        if args.command == "assumption1":
            return _run_assumption1(args)
        if args.command == "dump-system":
            return _run_dump_system(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
