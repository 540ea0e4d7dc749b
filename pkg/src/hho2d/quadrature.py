"""Quadrature rules on triangles and edges, including composite graded rules.

Triangle rules are collapsed (Duffy) Gauss-Jacobi x Gauss-Legendre tensor rules,
exact for bivariate polynomials up to the requested total degree, with strictly
positive weights.  Composite graded rules tile an element with geometrically
shrinking panels toward a singular point and apply a standard rule on each panel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

_GEOM_TOL = 1e-12


class QuadratureError(Exception):
    """Raised when a composite graded rule fails its convergence check."""


@dataclass(frozen=True)
class EdgeRule:
    """Quadrature on a 2D segment.

    ``tparams`` are the rule abscissas in the segment parameter t in [0,1]
    measured from the first endpoint; ``points`` are the corresponding 2D
    coordinates and ``weights`` include the arclength measure.
    """

    points: np.ndarray
    weights: np.ndarray
    tparams: np.ndarray
    degree: int


@dataclass(frozen=True)
class TriangleRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def _gauss01(n: int):
    """Gauss-Legendre nodes/weights on [0,1]."""
    x, w = roots_legendre(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gauss_jacobi01(n: int):
    """Nodes/weights for integral of g(u)*(1-u) on [0,1]."""
    x, w = roots_jacobi(n, 1.0, 0.0)
    return (x + 1.0) / 2.0, w / 4.0


def _npoints_for_degree(degree: int) -> int:
    return max(1, (degree + 2) // 2)


def triangle_area(verts: np.ndarray) -> float:
    v = np.asarray(verts, dtype=float)
    return 0.5 * abs(
        (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
        - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1])
    )


def _triangle_rule_raw(verts: np.ndarray, degree: int):
    """Collapsed tensor rule on the triangle spanned by three vertices."""
    n = _npoints_for_degree(degree)
    u, wu = _gauss_jacobi01(n)
    v, wv = _gauss01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    # reference map: x = u, y = v*(1-u); Jacobian (1-u) absorbed in wu
    X = U.ravel()
    Y = (V * (1.0 - U)).ravel()
    W = (WU * WV).ravel()
    verts = np.asarray(verts, dtype=float)
    e1 = verts[1] - verts[0]
    e2 = verts[2] - verts[0]
    pts = verts[0] + np.outer(X, e1) + np.outer(Y, e2)
    jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return pts, W * jac


def triangle_rule(verts, degree: int) -> TriangleRule:
    pts, w = _triangle_rule_raw(np.asarray(verts, dtype=float), degree)
    return TriangleRule(points=pts, weights=w, degree=degree)


def edge_rule(p0, p1, degree: int) -> EdgeRule:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = _npoints_for_degree(degree)
    t, w = _gauss01(n)
    length = float(np.hypot(*(p1 - p0)))
    pts = p0 + np.outer(t, p1 - p0)
    return EdgeRule(points=pts, weights=w * length, tparams=t, degree=degree)


def _edge_panels(t0: float, q: float, levels: int):
    """Geometric partition of [0,1] graded toward t0 in [0,1]."""
    panels = []
    for lo, hi in ((t0, 1.0), (0.0, t0)):
        span = hi - lo if hi > t0 else t0 - lo
        if span <= _GEOM_TOL:
            continue
        if hi > t0:  # grade toward t0 from the right
            cuts = t0 + span * q ** np.arange(levels + 1)
            panels.extend((cuts[i + 1], cuts[i]) for i in range(levels))
            panels.append((t0, cuts[levels]))
        else:  # grade toward t0 from the left
            cuts = t0 - span * q ** np.arange(levels + 1)
            panels.extend((cuts[i], cuts[i + 1]) for i in range(levels))
            panels.append((cuts[levels], t0))
    return [(a, b) for a, b in panels if b - a > 0.0]


def graded_edge_rule(p0, p1, singular_point, degree: int, q: float = 0.5,
                     levels: int = 24) -> EdgeRule:
    """Composite rule on a segment, graded toward a singular point.

    Falls back to the standard rule when the singular point is not on the
    (closed) segment.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    s = np.asarray(singular_point, dtype=float)
    d = p1 - p0
    length = float(np.hypot(*d))
    t0 = float(np.dot(s - p0, d) / (length * length))
    off = s - (p0 + t0 * d)
    if np.hypot(*off) > 1e-10 * length or t0 < -1e-10 or t0 > 1.0 + 1e-10:
        return edge_rule(p0, p1, degree)
    t0 = min(max(t0, 0.0), 1.0)
    n = _npoints_for_degree(degree) + 2
    x, w = _gauss01(n)
    ts, ws = [], []
    for a, b in _edge_panels(t0, q, levels):
        ts.append(a + (b - a) * x)
        ws.append((b - a) * w)
    t = np.concatenate(ts)
    wt = np.concatenate(ws)
    pts = p0 + np.outer(t, d)
    return EdgeRule(points=pts, weights=wt * length, tparams=t, degree=degree)


def _vertex_layers(v, a, b, degree: int, q: float, levels: int):
    """Panels of the triangle (v,a,b), graded toward the vertex v."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts_all, w_all = [], []
    for lev in range(levels):
        a0 = v + q**lev * (a - v)
        b0 = v + q**lev * (b - v)
        a1 = v + q ** (lev + 1) * (a - v)
        b1 = v + q ** (lev + 1) * (b - v)
        for tri in ((a1, a0, b0), (a1, b0, b1)):
            p, w = _triangle_rule_raw(np.array(tri), degree)
            pts_all.append(p)
            w_all.append(w)
    inner = np.array([v, v + q**levels * (a - v), v + q**levels * (b - v)])
    p, w = _triangle_rule_raw(inner, degree)
    pts_all.append(p)
    w_all.append(w)
    return pts_all, w_all


def graded_triangle_rule(verts, singular_point, degree: int, q: float = 0.5,
                         levels: int = 24) -> TriangleRule:
    """Composite rule on a triangle, graded toward a singular point.

    The point may be a vertex, lie on an edge, or lie inside the triangle;
    otherwise the standard rule is returned.
    """
    verts = np.asarray(verts, dtype=float)
    s = np.asarray(singular_point, dtype=float)
    h = max(np.hypot(*(verts[i] - verts[j])) for i in range(3) for j in range(i))
    # vertex coincidence
    for i in range(3):
        if np.hypot(*(verts[i] - s)) < 1e-12 * h:
            pts, ws = _vertex_layers(verts[i], verts[(i + 1) % 3],
                                     verts[(i + 2) % 3], degree, q, levels)
            return TriangleRule(points=np.vstack(pts), weights=np.concatenate(ws),
                                degree=degree)
    # barycentric test for membership
    T = np.column_stack((verts[1] - verts[0], verts[2] - verts[0]))
    lam12 = np.linalg.solve(T, s - verts[0])
    lam = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
    if np.any(lam < -1e-10):
        return triangle_rule(verts, degree)
    pts_all, w_all = [], []
    area = triangle_area(verts)
    for i in range(3):
        a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
        if triangle_area(np.array([s, a, b])) < 1e-14 * area:
            continue  # s lies on this edge
        pts, ws = _vertex_layers(s, a, b, degree, q, levels)
        pts_all.extend(pts)
        w_all.extend(ws)
    return TriangleRule(points=np.vstack(pts_all), weights=np.concatenate(w_all),
                        degree=degree)


def integrate_graded(f, make_rule, levels: int = 24, rtol: float = 1e-10,
                     max_levels: int = 48):
    """Integrate with a graded composite rule and a level-doubling check.

    ``make_rule(levels)`` must return an EdgeRule or TriangleRule.  Raises
    QuadratureError if the value has not settled at ``max_levels``.
    """
    rule = make_rule(levels)
    val = float(np.dot(rule.weights, f(rule.points)))
    while True:
        levels = min(2 * levels, max_levels)
        rule = make_rule(levels)
        val2 = float(np.dot(rule.weights, f(rule.points)))
        if abs(val2 - val) <= rtol * max(abs(val2), 1.0):
            return val2
        if levels >= max_levels:
            raise QuadratureError(
                f"graded quadrature not converged: tail {abs(val2 - val):.3e}")
        val = val2
