"""Built-in biharmonic test problems and the edge-interpolation decay study."""

from __future__ import annotations

import numpy as np
import sympy as sym

from .basis import eval_derivatives
from .local_ops import CanonicalInterp, CellOps, HHOConfig
from .quadrature import graded_edge_rule
from .system import ExactSolution, ProblemSpec

_EXPONENT = 4.0 / 3.0  # strength of the re-entrant corner singularity


def _lshape_powers(pts, power):
    """r^power * exp(i*power*theta) with theta in [0, 2*pi) (branch cut on the
    positive x axis, which lies outside the L-shaped domain's interior)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    r = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), 2.0 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        rp = np.where(r > 0.0, r**power, 0.0 if power > 0 else np.inf)
    return rp, theta


def case_lshape_singular() -> ProblemSpec:
    """u = Im(z^{4/3}) on the L-shape: biharmonic (f = 0), H^2-singular at the
    re-entrant corner, clamped data taken from the exact solution."""
    a = _EXPONENT

    def value(pts):
        rp, th = _lshape_powers(pts, a)
        return rp * np.sin(a * th)

    def grad(pts):
        rp, th = _lshape_powers(pts, a - 1.0)
        w = a * rp * np.exp(1j * (a - 1.0) * th)
        return np.stack([w.imag, w.real], axis=-1)

    def hess(pts):
        rp, th = _lshape_powers(pts, a - 2.0)
        w = a * (a - 1.0) * rp * np.exp(1j * (a - 2.0) * th)
        H = np.empty(w.shape + (2, 2))
        H[:, 0, 0] = w.imag
        H[:, 0, 1] = H[:, 1, 0] = w.real
        H[:, 1, 1] = -w.imag
        return H

    return ProblemSpec(
        name="lshape", domain="l-shape", f=None,
        exact=ExactSolution(value=value, grad=grad, hess=hess),
        singular_points=[(0.0, 0.0)],
        expected_rates={"adaptive": None},
    )


def _from_sympy(name, domain, expr, singular_points=()):
    x, y = sym.symbols("x y", real=True)
    fexpr = sym.diff(expr, x, 4) + 2 * sym.diff(expr, x, 2, y, 2) \
        + sym.diff(expr, y, 4)
    mods = ["numpy"]
    u = sym.lambdify((x, y), expr, mods)
    ux = sym.lambdify((x, y), sym.diff(expr, x), mods)
    uy = sym.lambdify((x, y), sym.diff(expr, y), mods)
    uxx = sym.lambdify((x, y), sym.diff(expr, x, 2), mods)
    uxy = sym.lambdify((x, y), sym.diff(expr, x, y), mods)
    uyy = sym.lambdify((x, y), sym.diff(expr, y, 2), mods)
    fl = sym.lambdify((x, y), sym.simplify(fexpr), mods)

    def _b(fn):
        def wrapped(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            return np.broadcast_to(
                np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float),
                (pts.shape[0],)).copy()
        return wrapped

    def grad(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([_b(ux)(pts), _b(uy)(pts)], axis=-1)

    def hess(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        H = np.empty((pts.shape[0], 2, 2))
        H[:, 0, 0] = _b(uxx)(pts)
        H[:, 0, 1] = H[:, 1, 0] = _b(uxy)(pts)
        H[:, 1, 1] = _b(uyy)(pts)
        return H

    f = _b(fl) if fexpr != 0 else None
    return ProblemSpec(
        name=name, domain=domain, f=f,
        exact=ExactSolution(value=_b(u), grad=grad, hess=hess),
        singular_points=list(singular_points),
    )


def case_square_smooth() -> ProblemSpec:
    """Smooth clamped solution on the unit square (homogeneous data)."""
    x, y = sym.symbols("x y", real=True)
    expr = (sym.sin(sym.pi * x) * sym.sin(sym.pi * y)
            * x * (1 - x) * y * (1 - y))
    return _from_sympy("square-smooth", "unit-square", expr)


def case_polynomial(degree: int, domain: str = "unit-square") -> ProblemSpec:
    """A dense polynomial of the given total degree with generic coefficients;
    HHO with cell degree >= this degree reproduces it exactly."""
    x, y = sym.symbols("x y", real=True)
    rng = np.random.default_rng(20230815 + degree)
    expr = sym.Integer(0)
    for d in range(degree + 1):
        for j in range(d + 1):
            c = sym.Rational(int(rng.integers(-9, 10)), int(rng.integers(1, 7)))
            expr += c * x ** (d - j) * y**j
    return _from_sympy(f"poly-{degree}", domain, expr)


def get_problem(name: str) -> ProblemSpec:
    if name == "lshape":
        return case_lshape_singular()
    if name == "square-smooth":
        return case_square_smooth()
    if name.startswith("poly-"):
        return case_polynomial(int(name.split("-", 1)[1]))
    raise KeyError(f"unknown problem {name!r}")


def assumption1_study(alpha: float, k_list, levels: int = 24):
    """Decay of the boundary normal-derivative interpolation error in k.

    On a fixed triangle with a corner at the origin, interpolate v = r^alpha
    canonically at degree k+2 and measure ||d_n(v - I v)|| on the boundary.
    Returns (rows, slope) where rows are (k, error) and slope is the fitted
    log-log slope of error against k + 2.
    """
    verts = np.array([[-0.5, 0.0], [0.5, 0.0], [-0.5, 1.0]])
    pairs = [(verts[0], verts[1]), (verts[1], verts[2]), (verts[2], verts[0])]

    def v(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.hypot(pts[:, 0], pts[:, 1]) ** alpha

    def grad_v(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0.0, alpha * r ** (alpha - 2.0), 0.0)
        return s[:, None] * pts

    rows = []
    for k in k_list:
        cfg = HHOConfig(int(k))
        ops = CellOps(verts, pairs, cfg)
        interp = CanonicalInterp(ops, degree=cfg.cell_degree)
        qd = 2 * cfg.cell_degree + 8
        cpoly = interp.cell_poly(v, singular_point=(0.0, 0.0), quad_degree=qd,
                                 levels=levels)
        err_sq = 0.0
        for ed in ops.edges:
            rule = graded_edge_rule(ed.p0, ed.p1, (0.0, 0.0), qd, levels=levels)
            _, gi, _, _, _, _ = eval_derivatives(ops.basis, cpoly, rule.points)
            dn_i = gi @ ed.n_out
            dn_v = grad_v(rule.points) @ ed.n_out
            err_sq += float(rule.weights @ (dn_v - dn_i) ** 2)
        rows.append((int(k), float(np.sqrt(err_sq))))
    from .adapt import fit_slope

    ks = np.array([r[0] + 2 for r in rows], dtype=float)
    errs = np.array([r[1] for r in rows])
    slope = fit_slope(ks, errs)
    return rows, slope
