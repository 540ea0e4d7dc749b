"""Orthonormal polynomial bases on cells and edges, projections, face calculus.

Cell bases are L2(T)-orthonormal combinations of scaled monomials centered at
the cell centroid (scaling h_T), built by QR of the weighted Vandermonde at
quadrature points.  Because the monomials are ordered by total degree and the
QR factor is triangular, the first dim(P^l) basis functions span P^l(T), so
projections onto any lower degree are coefficient truncations.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.linalg import solve_triangular

from .quadrature import EdgeRule, TriangleRule, triangle_rule


def space_dim(degree: int) -> int:
    """dim P^degree on a triangle (0 for degree <= -1)."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


def _exponents(degree: int):
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def _falling(n: int, k: int) -> float:
    if k > n:
        return 0.0
    return factorial(n) / factorial(n - k)


class CellBasis:
    """Orthonormal basis of P^degree(T) for a triangle T."""

    def __init__(self, verts, degree: int):
        verts = np.asarray(verts, dtype=float)
        self.verts = verts
        self.degree = degree
        self.centroid = verts.mean(axis=0)
        self.h = max(
            float(np.hypot(*(verts[i] - verts[j])))
            for i in range(3) for j in range(i)
        )
        self.exponents = _exponents(degree)
        self.dim = len(self.exponents)
        rule = triangle_rule(verts, max(2 * degree, 2))
        V = self._mono_eval(rule.points, 0, 0)
        A = np.sqrt(rule.weights)[:, None] * V
        _, R = np.linalg.qr(A)
        signs = np.sign(np.diag(R))
        signs[signs == 0] = 1.0
        R = signs[:, None] * R
        # columns of coeff express the orthonormal basis in scaled monomials
        self.coeff = solve_triangular(R, np.eye(self.dim))

    def _mono_eval(self, pts, dx: int, dy: int) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        X = (pts[:, 0] - self.centroid[0]) / self.h
        Y = (pts[:, 1] - self.centroid[1]) / self.h
        out = np.zeros((pts.shape[0], self.dim))
        scale = self.h ** (-(dx + dy))
        for m, (i, j) in enumerate(self.exponents):
            if i >= dx and j >= dy:
                c = _falling(i, dx) * _falling(j, dy) * scale
                out[:, m] = c * X ** (i - dx) * Y ** (j - dy)
        return out

    def eval(self, pts, dx: int = 0, dy: int = 0, ncols: int | None = None):
        """Values of the (dx,dy) derivative of the basis at points (n,2)."""
        C = self.coeff if ncols is None else self.coeff[:, :ncols]
        return self._mono_eval(pts, dx, dy) @ C

    def hessian(self, pts):
        """Hessian entries (Hxx, Hxy, Hyy), each (npts, dim)."""
        return (self.eval(pts, 2, 0), self.eval(pts, 1, 1), self.eval(pts, 0, 2))

    def grad_laplacian(self, pts):
        """Components of grad(Delta phi)."""
        gx = self.eval(pts, 3, 0) + self.eval(pts, 1, 2)
        gy = self.eval(pts, 2, 1) + self.eval(pts, 0, 3)
        return gx, gy

    def bilaplacian(self, pts):
        return (self.eval(pts, 4, 0) + 2.0 * self.eval(pts, 2, 2)
                + self.eval(pts, 0, 4))


class EdgeBasis:
    """Orthonormal (in L2(F)) Legendre basis on a segment, degree <= degree."""

    def __init__(self, p0, p1, degree: int):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.degree = degree
        self.dim = degree + 1
        self.length = float(np.hypot(*(self.p1 - self.p0)))
        self._norms = np.sqrt((2.0 * np.arange(self.dim) + 1.0) / self.length)

    def eval_t(self, t, deriv: int = 0) -> np.ndarray:
        """Values (or arclength derivatives) at parameters t in [0,1]."""
        t = np.asarray(t, dtype=float)
        x = 2.0 * t - 1.0
        out = np.zeros((t.shape[0], self.dim))
        for m in range(self.dim):
            c = np.zeros(m + 1)
            c[m] = 1.0
            if deriv:
                c = npleg.legder(c, deriv)
            out[:, m] = npleg.legval(x, c) * self._norms[m]
        if deriv:
            out *= (2.0 / self.length) ** deriv
        return out


def eval_derivatives(basis: CellBasis, coeffs: np.ndarray, pts):
    """Value, gradient, Hessian, Laplacian, grad-Laplacian and bilaplacian of a
    cell polynomial given by orthonormal-basis coefficients."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    val = basis.eval(pts) @ coeffs
    grad = np.stack(
        [basis.eval(pts, 1, 0) @ coeffs, basis.eval(pts, 0, 1) @ coeffs], axis=-1
    )
    hxx = basis.eval(pts, 2, 0) @ coeffs
    hxy = basis.eval(pts, 1, 1) @ coeffs
    hyy = basis.eval(pts, 0, 2) @ coeffs
    hess = np.empty(pts.shape[:1] + (2, 2))
    hess[:, 0, 0] = hxx
    hess[:, 0, 1] = hxy
    hess[:, 1, 0] = hxy
    hess[:, 1, 1] = hyy
    lap = hxx + hyy
    glx, gly = basis.grad_laplacian(pts)
    glap = np.stack([glx @ coeffs, gly @ coeffs], axis=-1)
    bilap = basis.bilaplacian(pts) @ coeffs
    return val, grad, hess, lap, glap, bilap


def project_cell(f, basis: CellBasis, degree: int, rule: TriangleRule) -> np.ndarray:
    """Coefficients of the L2(T) projection of f onto P^degree(T).

    Returned in the leading columns of ``basis`` (degree <= basis.degree);
    degree <= -1 yields the empty (zero) polynomial.
    """
    nd = space_dim(degree)
    if nd == 0:
        return np.zeros(0)
    vals = np.asarray(f(rule.points), dtype=float)
    return basis.eval(rule.points, ncols=nd).T @ (rule.weights * vals)


def project_edge(g, ebasis: EdgeBasis, degree: int, rule: EdgeRule) -> np.ndarray:
    """Coefficients of the L2(F) projection of g onto P^degree(F)."""
    nd = degree + 1
    if degree < 0:
        return np.zeros(0)
    vals = np.asarray(g(rule.points), dtype=float)
    return ebasis.eval_t(rule.tparams)[:, :nd].T @ (rule.weights * vals)


def face_components(hess, grad, normal):
    """Split gradient/Hessian into normal and tangential parts on a face.

    Returns (dn, dt, dnn, dnt, dtt) where dt is the tangential gradient
    vector, dnt the tangential part of H n, and dtt the tangential-tangential
    Hessian block (2x2, rank one in 2D).
    """
    n = np.asarray(normal, dtype=float)
    g = np.asarray(grad, dtype=float)
    H = np.asarray(hess, dtype=float)
    P = np.eye(2) - np.outer(n, n)
    dn = float(n @ g)
    dt = P @ g
    Hn = H @ n
    dnn = float(n @ Hn)
    dnt = P @ Hn
    dtt = P @ H @ P
    return dn, dt, dnn, dnt, dtt


def jump_on_edge(values_plus, values_minus=None):
    """Jump convention: plus-side trace minus minus-side trace; on boundary
    faces the jump is the trace itself."""
    if values_minus is None:
        return np.asarray(values_plus)
    return np.asarray(values_plus) - np.asarray(values_minus)
