"""Doerfler marking, the SOLVE-ESTIMATE-MARK-REFINE loop, and run records."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorBreakdown, estimate
from .local_ops import HHOConfig
from .mesh import Mesh2D, refine_nvb, uniform_refine
from .system import ProblemSpec, energy_error, solve_problem


@dataclass
class AdaptConfig:
    theta: float = 0.30
    max_iter: int = 25
    dof_budget: int = 200_000
    mode: str = "adaptive"          # "adaptive" | "uniform"
    bound: str = "B"

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.bound not in ("A", "B"):
            raise ValueError(f"unknown bound {self.bound!r}")


@dataclass
class RunRecord:
    iter: int
    ncells: int
    dofs: int
    energy_error: float       # nan when no exact solution
    bound_A: float
    bound_B: float
    effectivity: float        # nan when no exact solution
    seconds: float


@dataclass
class RunResult:
    records: list
    mesh: Mesh2D
    breakdown: EstimatorBreakdown = None
    solution: object = None


def dorfler_mark(eta_sq: np.ndarray, theta: float) -> np.ndarray:
    """Smallest prefix of cells (by decreasing squared indicator, ties by cell
    id) whose content reaches theta times the total."""
    eta_sq = np.asarray(eta_sq, dtype=float)
    total = float(eta_sq.sum())
    if total <= 0.0:
        return np.array([], dtype=np.int64)
    order = np.lexsort((np.arange(eta_sq.size), -eta_sq))
    csum = np.cumsum(eta_sq[order])
    nmark = int(np.searchsorted(csum, theta * total) + 1)
    nmark = min(nmark, eta_sq.size)
    return np.sort(order[:nmark])


def fit_slope(x, y) -> float:
    """Log-log slope fitted over the last max(3, n//2) points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    if x.size < 2:
        return float("nan")
    m = max(3, x.size // 2)
    m = min(m, x.size)
    return float(np.polyfit(np.log(x[-m:]), np.log(y[-m:]), 1)[0])


def solve_and_record(mesh: Mesh2D, cfg: HHOConfig, problem: ProblemSpec,
                     iteration: int, bound: str = "B", cache: dict | None = None,
                     timing: bool = False):
    """One SOLVE + ESTIMATE step; returns (record, solution, breakdown)."""
    t0 = time.perf_counter()
    sol = solve_problem(mesh, cfg, problem, cache=cache)
    bd = estimate(sol, problem)
    if problem.exact is not None:
        _, err = energy_error(sol, problem)
        eff = bd.total(bound) / err if err >= 1e-14 else float("nan")
    else:
        err = float("nan")
        eff = float("nan")
    seconds = time.perf_counter() - t0 if timing else 0.0
    record = RunRecord(
        iter=iteration, ncells=mesh.ncells, dofs=sol.dofmap.ndofs,
        energy_error=err, bound_A=bd.bound_A, bound_B=bd.bound_B,
        effectivity=eff, seconds=seconds)
    return record, sol, bd


def run_loop(mesh: Mesh2D, cfg: HHOConfig, problem: ProblemSpec,
             acfg: AdaptConfig, timing: bool = False) -> RunResult:
    """Adaptive (or uniform) refinement loop.

    Produces one record per solve; refinement stops once ``max_iter`` records
    exist or the DoF budget is exceeded.
    """
    records = []
    cache: dict = {}
    n_records = max(1, acfg.max_iter)
    sol = bd = None
    while True:
        rec, sol, bd = solve_and_record(mesh, cfg, problem, len(records),
                                        bound=acfg.bound, cache=cache,
                                        timing=timing)
        records.append(rec)
        if len(records) >= n_records or sol.dofmap.ndofs >= acfg.dof_budget:
            break
        if acfg.mode == "uniform":
            marked = np.arange(mesh.ncells)
        else:
            marked = dorfler_mark(bd.marking, acfg.theta)
            if marked.size == 0:
                break
        mesh = refine_nvb(mesh, marked)
    return RunResult(records=records, mesh=mesh, breakdown=bd, solution=sol)


def run_levels(mesh: Mesh2D, cfg: HHOConfig, problem: ProblemSpec,
               levels: int, bound: str = "B", timing: bool = False) -> RunResult:
    """Uniform convergence study: one record per level, halving the mesh size
    (two newest-vertex-bisection sweeps) between levels."""
    records = []
    cache: dict = {}
    sol = bd = None
    for lev in range(max(1, levels + 1)):
        rec, sol, bd = solve_and_record(mesh, cfg, problem, lev, bound=bound,
                                        cache=cache, timing=timing)
        records.append(rec)
        if lev < levels:
            mesh = uniform_refine(uniform_refine(mesh))
    return RunResult(records=records, mesh=mesh, breakdown=bd, solution=sol)


_COLUMNS = ("iter", "ncells", "dofs", "energy_error", "bound_A", "bound_B",
            "effectivity", "seconds")


def save_history_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(_COLUMNS) + "\n")
        for r in records:
            fh.write(f"{r.iter},{r.ncells},{r.dofs},"
                     f"{r.energy_error:.17g},{r.bound_A:.17g},"
                     f"{r.bound_B:.17g},{r.effectivity:.17g},"
                     f"{r.seconds:.17g}\n")


def save_history_json(records, path, config: dict | None = None) -> None:
    payload = {
        "config": config or {},
        "records": [
            {c: getattr(r, c) for c in _COLUMNS} for r in records
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
