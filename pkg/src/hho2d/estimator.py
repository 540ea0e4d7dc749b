"""Residual-based hp a posteriori error indicators and global bounds.

Per cell T (with hbar = h_T/(k+2)):
  eta_sta = sqrt(S(uhat, uhat))
  eta_res = hbar^2 ||P_{k-2} f - biLap R||_T
            + hbar^{1/2} ||[d_nt R]||_{dT \\ boundary}
            + hbar^{3/2} ||[d_n Lap R]||_{dT \\ boundary}
  eta_tan = hbar^{1/2} (||[d_tt u_T]||_{dT} + ||[d_nt u_T]||_{dT})
where jumps on boundary edges are taken against the Hessian of the boundary
data extension (the exact solution when available, zero otherwise), and the
oscillation terms are
  osc   = hbar^2 ||f - P_{k-2} f||_T
  osc'  = hbar'^2 ||f - P_q f||_T,  hbar' = h_T / max(k-1, 1),
with q = k-1 for the standard variant and k-2 for the reduced-trace variant.

Global bounds (squared):
  bound_A^2 = sum_T eta_tan^2 + (k+2) eta_sta^2 + eta_res^2 + osc^2
  bound_B^2 = sum_T eta_tan^2 + (k+2) eta_sta^2
              + min(sum_T eta_res^2 + osc^2, sum_T (k+2) osc'^2)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import space_dim
from .quadrature import edge_rule
from .system import DiscreteSolution, ProblemSpec


@dataclass
class EstimatorBreakdown:
    k: int
    eta_sta: np.ndarray
    eta_res: np.ndarray
    eta_tan: np.ndarray
    eta_res_parts: np.ndarray   # (nc, 3): bulk, d_nt jump, d_n Lap jump
    eta_tan_parts: np.ndarray   # (nc, 2): d_tt jump, d_nt jump
    osc: np.ndarray
    osc_prime: np.ndarray
    bound_A: float
    bound_B: float
    min_branch: int             # which branch won in bound_B (0: res+osc, 1: osc')

    @property
    def marking(self) -> np.ndarray:
        """Per-cell squared content used for Doerfler marking."""
        return (self.eta_tan**2 + (self.k + 2) * self.eta_sta**2
                + self.eta_res**2 + self.osc**2)

    def total(self, bound: str = "B") -> float:
        if bound == "A":
            return self.bound_A
        if bound == "B":
            return self.bound_B
        raise ValueError(f"unknown bound {bound!r}")


def _edge_cell_traces(sol, t, e, pts):
    """Hessian rows and normal-component of grad(Lap) of u_T and R_T(uhat) of
    cell t at the given edge points."""
    ops = sol.ops_list[t]
    lay = ops.layout
    u = sol.uhat[t][lay.cell]
    r = ops.reconstruct(sol.uhat[t])
    b = ops.basis
    hxx, hxy, hyy = b.eval(pts, 2, 0), b.eval(pts, 1, 1), b.eval(pts, 0, 2)
    glx, gly = b.grad_laplacian(pts)
    out = {}
    for tag, c in (("u", u), ("r", r)):
        out[tag] = (hxx @ c, hxy @ c, hyy @ c, glx @ c, gly @ c)
    return out


def _tensor_components(hxx, hxy, hyy, n, tau):
    n0, n1 = n
    t0, t1 = tau
    d_nt = t0 * n0 * hxx + (t0 * n1 + t1 * n0) * hxy + t1 * n1 * hyy
    d_tt = t0 * t0 * hxx + 2 * t0 * t1 * hxy + t1 * t1 * hyy
    return d_nt, d_tt


def estimate(sol: DiscreteSolution, problem: ProblemSpec) -> EstimatorBreakdown:
    mesh, cfg = sol.mesh, sol.cfg
    k = cfg.k
    nc = mesh.ncells
    hbar = mesh.h_cell / (k + 2)
    hbar_p = mesh.h_cell / max(k - 1, 1)

    bulk = np.zeros(nc)
    osc = np.zeros(nc)
    osc_p = np.zeros(nc)
    res_nt = np.zeros(nc)
    res_ndl = np.zeros(nc)
    tan_tt = np.zeros(nc)
    tan_nt = np.zeros(nc)
    eta_sta = np.zeros(nc)

    q_prime = k - 1 if cfg.variant == "standard" else k - 2
    for t, ops in enumerate(sol.ops_list):
        eta_sta[t] = np.sqrt(ops.stab_energy(sol.uhat[t]))
        rule = ops.cell_rule
        w = rule.weights
        rcoef = ops.reconstruct(sol.uhat[t])
        bilap = ops.basis.bilaplacian(rule.points) @ rcoef
        if problem.f is None:
            fvals = np.zeros(w.size)
        else:
            fvals = np.asarray(problem.f(rule.points), dtype=float)
        phi = ops.phi

        def proj(vals, degree):
            nd = space_dim(degree)
            if nd == 0:
                return np.zeros(w.size)
            coef = phi[:, :nd].T @ (w * vals)
            return phi[:, :nd] @ coef

        pf = proj(fvals, k - 2)
        bulk[t] = np.sqrt(float(w @ (pf - bilap) ** 2))
        osc[t] = np.sqrt(max(float(w @ (fvals - pf) ** 2), 0.0))
        pfp = proj(fvals, q_prime)
        osc_p[t] = np.sqrt(max(float(w @ (fvals - pfp) ** 2), 0.0))

    qd_int = 2 * cfg.cell_degree
    qd_bnd = 2 * cfg.cell_degree + 4
    for e in range(mesh.nedges):
        p0 = mesh.vertices[mesh.edges[e, 0]]
        p1 = mesh.vertices[mesh.edges[e, 1]]
        n = mesh.edge_normal[e]
        tau = np.array([-n[1], n[0]])
        if mesh.edge_boundary[e]:
            t0 = int(mesh.edge_cells[e, 0])
            rule = edge_rule(p0, p1, qd_bnd)
            tr = _edge_cell_traces(sol, t0, e, rule.points)
            hxx, hxy, hyy, _, _ = tr["u"]
            if problem.exact is not None:
                He = problem.exact.hess(rule.points)
                hxx = hxx - He[:, 0, 0]
                hxy = hxy - He[:, 0, 1]
                hyy = hyy - He[:, 1, 1]
            d_nt, d_tt = _tensor_components(hxx, hxy, hyy, n, tau)
            tan_tt[t0] += float(rule.weights @ d_tt**2)
            tan_nt[t0] += float(rule.weights @ d_nt**2)
            continue
        t_plus = int(mesh.edge_cells[e, 0])
        t_minus = int(mesh.edge_cells[e, 1])
        rule = edge_rule(p0, p1, qd_int)
        trp = _edge_cell_traces(sol, t_plus, e, rule.points)
        trm = _edge_cell_traces(sol, t_minus, e, rule.points)
        # tangential jumps of the cell unknown
        hxx = trp["u"][0] - trm["u"][0]
        hxy = trp["u"][1] - trm["u"][1]
        hyy = trp["u"][2] - trm["u"][2]
        d_nt, d_tt = _tensor_components(hxx, hxy, hyy, n, tau)
        jtt = float(rule.weights @ d_tt**2)
        jnt = float(rule.weights @ d_nt**2)
        tan_tt[t_plus] += jtt
        tan_tt[t_minus] += jtt
        tan_nt[t_plus] += jnt
        tan_nt[t_minus] += jnt
        # residual jumps of the reconstruction
        hxx = trp["r"][0] - trm["r"][0]
        hxy = trp["r"][1] - trm["r"][1]
        hyy = trp["r"][2] - trm["r"][2]
        d_nt, _ = _tensor_components(hxx, hxy, hyy, n, tau)
        glx = trp["r"][3] - trm["r"][3]
        gly = trp["r"][4] - trm["r"][4]
        d_ndl = n[0] * glx + n[1] * gly
        jnt = float(rule.weights @ d_nt**2)
        jndl = float(rule.weights @ d_ndl**2)
        res_nt[t_plus] += jnt
        res_nt[t_minus] += jnt
        res_ndl[t_plus] += jndl
        res_ndl[t_minus] += jndl

    eta_res_parts = np.column_stack([
        hbar**2 * bulk,
        hbar**0.5 * np.sqrt(res_nt),
        hbar**1.5 * np.sqrt(res_ndl),
    ])
    eta_tan_parts = np.column_stack([
        hbar**0.5 * np.sqrt(tan_tt),
        hbar**0.5 * np.sqrt(tan_nt),
    ])
    eta_res = eta_res_parts.sum(axis=1)
    eta_tan = eta_tan_parts.sum(axis=1)
    osc = hbar**2 * osc
    osc_p = hbar_p**2 * osc_p

    common = float(np.sum(eta_tan**2 + (k + 2) * eta_sta**2))
    res_osc = float(np.sum(eta_res**2 + osc**2))
    alt = float(np.sum((k + 2) * osc_p**2))
    bound_A = float(np.sqrt(common + res_osc))
    min_branch = 0 if res_osc <= alt else 1
    bound_B = float(np.sqrt(common + min(res_osc, alt)))
    return EstimatorBreakdown(
        k=k, eta_sta=eta_sta, eta_res=eta_res, eta_tan=eta_tan,
        eta_res_parts=eta_res_parts, eta_tan_parts=eta_tan_parts,
        osc=osc, osc_prime=osc_p, bound_A=bound_A, bound_B=bound_B,
        min_branch=min_branch)


def effectivity(breakdown: EstimatorBreakdown, error: float,
                bound: str = "B") -> float:
    if error < 1e-14:
        return float("nan")
    return breakdown.total(bound) / error


def save_indicators(breakdown: EstimatorBreakdown, path) -> None:
    """Per-cell indicator dump (CSV)."""
    with open(path, "w") as fh:
        fh.write("cell,eta_sta,eta_res,eta_tan,osc,osc_prime\n")
        for t in range(breakdown.eta_sta.size):
            fh.write(f"{t},{breakdown.eta_sta[t]:.17g},"
                     f"{breakdown.eta_res[t]:.17g},"
                     f"{breakdown.eta_tan[t]:.17g},"
                     f"{breakdown.osc[t]:.17g},"
                     f"{breakdown.osc_prime[t]:.17g}\n")
