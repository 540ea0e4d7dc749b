"""Per-cell HHO machinery for the biharmonic problem.

Local unknowns on a cell T are ordered ``[cell | F0 trace, F0 normal | F1 ...]``
where the cell block holds a polynomial of degree k+2, each trace block a
polynomial of the trace degree on the edge, and each normal block a degree-k
edge polynomial already oriented along the outward normal of T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .basis import CellBasis, EdgeBasis, space_dim
from .quadrature import (edge_rule, graded_edge_rule, graded_triangle_rule,
                         triangle_rule)


@dataclass(frozen=True)
class HHOConfig:
    """Degrees of the HHO method: face parameter k >= 0 and variant."""

    k: int
    variant: str = "standard"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.variant not in ("standard", "hho-a"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def cell_degree(self) -> int:
        return self.k + 2

    @property
    def trace_degree(self) -> int:
        return self.k + 2 if self.variant == "standard" else self.k + 1

    @property
    def normal_degree(self) -> int:
        return self.k

    @property
    def canonical_degree(self) -> int:
        """Degree of the canonical hybrid interpolant feeding the reduction."""
        return self.k + 2 if self.variant == "standard" else self.k + 1


class LocalLayout:
    """Index bookkeeping for the local dof vector of one cell."""

    def __init__(self, cfg: HHOConfig):
        self.ncell = space_dim(cfg.cell_degree)
        self.ntr = cfg.trace_degree + 1
        self.nnd = cfg.normal_degree + 1
        self.nface = 3 * (self.ntr + self.nnd)
        self.total = self.ncell + self.nface
        self.cell = slice(0, self.ncell)
        self.trace = []
        self.normal = []
        for f in range(3):
            base = self.ncell + f * (self.ntr + self.nnd)
            self.trace.append(slice(base, base + self.ntr))
            self.normal.append(slice(base + self.ntr, base + self.ntr + self.nnd))
        self.faces = slice(self.ncell, self.total)


class LocalEdge:
    """Geometry, bases and cell-basis traces on one edge of a cell."""

    def __init__(self, p0, p1, cell_verts, cfg: HHOConfig, basis: CellBasis,
                 quad_degree: int):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.length = float(np.hypot(*(self.p1 - self.p0)))
        d = (self.p1 - self.p0) / self.length
        n = np.array([d[1], -d[0]])
        mid = 0.5 * (self.p0 + self.p1)
        if n @ (mid - cell_verts.mean(axis=0)) < 0:
            n = -n
        self.n_out = n
        self.tau = np.array([-n[1], n[0]])
        self.tsign = float(np.sign(self.tau @ d))  # d(.)/dtau = tsign * d(.)/ds
        self.trace_basis = EdgeBasis(p0, p1, cfg.trace_degree)
        self.gamma_basis = EdgeBasis(p0, p1, cfg.normal_degree)
        self.rule = edge_rule(p0, p1, quad_degree)
        pts = self.rule.points
        self.cb_val = basis.eval(pts)
        gx = basis.eval(pts, 1, 0)
        gy = basis.eval(pts, 0, 1)
        self.cb_dn = n[0] * gx + n[1] * gy
        self.cb_dtau = self.tau[0] * gx + self.tau[1] * gy
        hxx, hxy, hyy = basis.hessian(pts)
        n0, n1 = n
        t0, t1 = self.tau
        self.cb_dnn = n0 * n0 * hxx + 2 * n0 * n1 * hxy + n1 * n1 * hyy
        self.cb_dnt = t0 * n0 * hxx + (t0 * n1 + t1 * n0) * hxy + t1 * n1 * hyy
        glx, gly = basis.grad_laplacian(pts)
        self.cb_dnlap = n0 * glx + n1 * gly
        self.tr_val = self.trace_basis.eval_t(self.rule.tparams)
        self.tr_dtau = self.tsign * self.trace_basis.eval_t(self.rule.tparams, 1)
        self.g_val = self.gamma_basis.eval_t(self.rule.tparams)


class CellOps:
    """Reconstruction, stabilization, stiffness and condensation for one cell."""

    def __init__(self, cell_verts, edge_pairs, cfg: HHOConfig):
        self.cfg = cfg
        self.verts = np.asarray(cell_verts, dtype=float)
        self.layout = LocalLayout(cfg)
        lay = self.layout
        kk = cfg.k
        quad_degree = 2 * cfg.cell_degree + 2
        self.basis = CellBasis(self.verts, cfg.cell_degree)
        self.h = self.basis.h
        self.hbar = self.h / (kk + 2)
        self.cell_rule = triangle_rule(self.verts, quad_degree)
        self.phi = self.basis.eval(self.cell_rule.points)
        self.edges = [LocalEdge(p0, p1, self.verts, cfg, self.basis, quad_degree)
                      for (p0, p1) in edge_pairs]

        # Hessian Gram matrix (orthonormal basis)
        w = self.cell_rule.weights
        hxx, hxy, hyy = self.basis.hessian(self.cell_rule.points)
        self.Gh = hxx.T @ (w[:, None] * hxx) + 2.0 * hxy.T @ (w[:, None] * hxy) \
            + hyy.T @ (w[:, None] * hyy)
        self.Gh = 0.5 * (self.Gh + self.Gh.T)

        self.R = self._build_reconstruction()
        self.S = self._build_stabilization()
        A = self.R.T @ self.Gh @ self.R + self.S
        self.A = 0.5 * (A + A.T)

        # static condensation of the cell block
        c, f = lay.cell, lay.faces
        Acc = self.A[c, c]
        self.Acf = self.A[c, f]
        try:
            self._acc_cho = cho_factor(Acc)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise RuntimeError("cell block not SPD (degenerate cell?)") from exc
        self._Y = cho_solve(self._acc_cho, self.Acf)
        schur = self.A[f, f] - self.Acf.T @ self._Y
        self.schur = 0.5 * (schur + schur.T)

    # -- operators ---------------------------------------------------------

    def _build_reconstruction(self) -> np.ndarray:
        lay = self.layout
        nc = lay.ncell
        B = np.zeros((nc, lay.total))
        B[:, lay.cell] = self.Gh
        for f, ed in enumerate(self.edges):
            w = ed.rule.weights[:, None]
            B[:, lay.cell] += ed.cb_dnlap.T @ (w * ed.cb_val) \
                - ed.cb_dnn.T @ (w * ed.cb_dn) - ed.cb_dnt.T @ (w * ed.cb_dtau)
            B[:, lay.trace[f]] = -ed.cb_dnlap.T @ (w * ed.tr_val) \
                + ed.cb_dnt.T @ (w * ed.tr_dtau)
            B[:, lay.normal[f]] = ed.cb_dnn.T @ (w * ed.g_val)
        K = np.zeros((nc + 3, nc + 3))
        K[:nc, :nc] = self.Gh
        K[:nc, nc:] = np.eye(nc, 3)
        K[nc:, :nc] = np.eye(3, nc)
        rhs = np.zeros((nc + 3, lay.total))
        rhs[:nc] = B
        rhs[nc:nc + 3, :3] = np.eye(3)
        try:
            lu = lu_factor(K)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RuntimeError("singular reconstruction system") from exc
        return lu_solve(lu, rhs)[:nc]

    def _build_stabilization(self) -> np.ndarray:
        """Also stores ``self.stab_factor`` E with S = E^T E, so that the
        stabilization seminorm can be evaluated as ||E uhat||^2 without the
        cancellation inherent in uhat^T S uhat."""
        lay = self.layout
        kk = self.cfg.k
        w1 = (kk + 2) ** 3 / self.hbar ** 3
        w2 = (kk + 2) / self.hbar
        blocks = []
        for f, ed in enumerate(self.edges):
            w = ed.rule.weights
            D1 = np.zeros((w.size, lay.total))
            D1[:, lay.trace[f]] = ed.tr_val
            D1[:, lay.cell] = -ed.cb_val
            blocks.append(np.sqrt(w1 * w)[:, None] * D1)
            # edgewise projection of the cell normal derivative onto P^k(F)
            pk = ed.g_val.T @ (w[:, None] * ed.cb_dn)
            D2 = np.zeros((w.size, lay.total))
            D2[:, lay.normal[f]] = ed.g_val
            D2[:, lay.cell] = -ed.g_val @ pk
            blocks.append(np.sqrt(w2 * w)[:, None] * D2)
        self.stab_factor = np.vstack(blocks)
        S = self.stab_factor.T @ self.stab_factor
        return 0.5 * (S + S.T)

    # -- condensation ------------------------------------------------------

    def cell_load(self, f, rule=None) -> np.ndarray:
        """Load vector (f, phi_i)_T over the cell block."""
        if f is None:
            return np.zeros(self.layout.ncell)
        if rule is None:
            rule = self.cell_rule
            phi = self.phi
        else:
            phi = self.basis.eval(rule.points)
        vals = np.asarray(f(rule.points), dtype=float)
        return phi.T @ (rule.weights * vals)

    def condensed_rhs(self, bcell: np.ndarray) -> np.ndarray:
        return -self._Y.T @ bcell

    def recover_cell(self, bcell: np.ndarray, uface: np.ndarray) -> np.ndarray:
        return cho_solve(self._acc_cho, bcell) - self._Y @ uface

    def reconstruct(self, uhat: np.ndarray) -> np.ndarray:
        """Coefficients of R_T(uhat) in the cell basis."""
        return self.R @ uhat

    def phi_edge(self, ed: LocalEdge, ncols: int) -> np.ndarray:
        return self.basis.eval(ed.rule.points, ncols=ncols)

    def stab_energy(self, uhat: np.ndarray, vhat: np.ndarray | None = None) -> float:
        if vhat is None:
            return float(np.sum((self.stab_factor @ uhat) ** 2))
        return float((self.stab_factor @ uhat) @ (self.stab_factor @ vhat))


def build_cell_ops(mesh, t: int, cfg: HHOConfig) -> CellOps:
    """CellOps for mesh cell t; edge order matches ``mesh.cell_edges[t]``."""
    edge_pairs = []
    for i in range(3):
        e = mesh.cell_edges[t, i]
        v0, v1 = mesh.edges[e]
        edge_pairs.append((mesh.vertices[v0], mesh.vertices[v1]))
    return CellOps(mesh.cell_vertices(t), edge_pairs, cfg)


class CanonicalInterp:
    """Canonical hybrid finite element interpolation on one cell.

    Degrees of freedom: vertex values, edge moments against P^{l-2}(F), and
    cell moments against P^{l-3}(T), where l is the interpolant degree.
    """

    def __init__(self, ops: CellOps, degree: int | None = None):
        self.ops = ops
        self.degree = ops.cfg.canonical_degree if degree is None else degree
        ell = self.degree
        nd = space_dim(ell)
        self.nd = nd
        basis = ops.basis
        self.edge_mom_deg = ell - 2
        self.cell_mom_dim = space_dim(ell - 3)
        rows = [basis.eval(ops.verts, ncols=nd)]
        self.mom_bases = []
        for ed in ops.edges:
            mb = EdgeBasis(ed.p0, ed.p1, max(self.edge_mom_deg, 0))
            self.mom_bases.append(mb)
            if self.edge_mom_deg < 0:
                continue
            mvals = mb.eval_t(ed.rule.tparams)
            rows.append(mvals.T @ (ed.rule.weights[:, None] * ops.phi_edge(ed, nd)))
        if self.cell_mom_dim:
            rows.append(np.eye(self.cell_mom_dim, nd))
        D = np.vstack(rows)
        if D.shape[0] != nd:
            raise RuntimeError("canonical dof count mismatch")
        try:
            self._lu = lu_factor(D)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RuntimeError("singular canonical dof system") from exc

    def cell_poly(self, v, singular_point=None, quad_degree=None,
                  levels: int = 24) -> np.ndarray:
        """Coefficients (cell basis, padded) of the canonical interpolant."""
        ops = self.ops
        ell = self.degree
        qd = quad_degree or 2 * ops.cfg.cell_degree + 6
        dofs = [np.asarray(v(ops.verts), dtype=float)]
        for ed, mb in zip(ops.edges, self.mom_bases):
            if self.edge_mom_deg < 0:
                continue
            if singular_point is not None:
                r = graded_edge_rule(ed.p0, ed.p1, singular_point, qd,
                                     levels=levels)
            else:
                r = edge_rule(ed.p0, ed.p1, qd)
            vals = np.asarray(v(r.points), dtype=float)
            dofs.append(mb.eval_t(r.tparams).T @ (r.weights * vals))
        if self.cell_mom_dim:
            if singular_point is not None:
                r = graded_triangle_rule(ops.verts, singular_point, qd,
                                         levels=levels)
            else:
                r = triangle_rule(ops.verts, qd)
            vals = np.asarray(v(r.points), dtype=float)
            dofs.append(ops.basis.eval(r.points, ncols=self.cell_mom_dim).T
                        @ (r.weights * vals))
        c = lu_solve(self._lu, np.concatenate(dofs))
        out = np.zeros(ops.layout.ncell)
        out[:self.nd] = c
        return out


def interpolate_canonical(ops: CellOps, v, grad, singular_point=None,
                          quad_degree=None, levels: int = 24) -> np.ndarray:
    """HHO reduction of a field: canonical cell polynomial, its edge traces,
    and the edgewise P^k projection of the outward normal derivative."""
    lay = ops.layout
    interp = CanonicalInterp(ops)
    cpoly = interp.cell_poly(v, singular_point, quad_degree, levels)
    out = np.zeros(lay.total)
    out[lay.cell] = cpoly
    qd = quad_degree or 2 * ops.cfg.cell_degree + 6
    for f, ed in enumerate(ops.edges):
        # trace block: exact representation of the interpolant's edge trace
        tvals = ed.cb_val @ cpoly
        out[lay.trace[f]] = ed.tr_val.T @ (ed.rule.weights * tvals)
        # normal block: projection of n_T . grad v
        if singular_point is not None:
            r = graded_edge_rule(ed.p0, ed.p1, singular_point, qd, levels=levels)
        else:
            r = edge_rule(ed.p0, ed.p1, qd)
        gvals = np.asarray(grad(r.points), dtype=float) @ ed.n_out
        out[lay.normal[f]] = ed.gamma_basis.eval_t(r.tparams).T @ (r.weights * gvals)
    return out
