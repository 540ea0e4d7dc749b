"""Built-in problems: exact data self-consistency (finite differences as the
oracle) and the degree-decay study."""

import numpy as np
import pytest

from hho2d.problems import (assumption1_study, case_lshape_singular,
                            case_polynomial, case_square_smooth, get_problem)


def central_fd_grad(f, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    out = np.zeros(2)
    for i in range(2):
        dp = np.zeros(2)
        dp[i] = h
        out[i] = (f(p + dp)[0] - f(p - dp)[0]) / (2 * h)
    return out


def test_lshape_basics():
    prob = case_lshape_singular()
    assert prob.f is None
    assert prob.domain == "l-shape"
    assert prob.singular_points == [(0.0, 0.0)]
    assert abs(prob.exact.value(np.array([[0.0, 0.0]]))[0]) == 0.0
    # |u| <= r^{4/3} everywhere
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, size=(200, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert np.all(np.abs(prob.exact.value(pts)) <= r ** (4.0 / 3.0) + 1e-12)


def test_lshape_grad_hess_vs_fd():
    prob = case_lshape_singular()
    rng = np.random.default_rng(2)
    # sample away from the origin and the branch cut on the positive x-axis
    pts = np.column_stack([rng.uniform(-0.9, -0.2, 30),
                           rng.uniform(0.2, 0.9, 30)])
    g = prob.exact.grad(pts)
    H = prob.exact.hess(pts)
    for i in range(pts.shape[0]):
        fd_g = central_fd_grad(lambda q: prob.exact.value(np.atleast_2d(q)),
                               pts[i])
        assert np.max(np.abs(fd_g - g[i])) < 1e-6 * max(1.0,
                                                        np.abs(g[i]).max())
        fd_h0 = central_fd_grad(
            lambda q: prob.exact.grad(np.atleast_2d(q))[:, 0], pts[i])
        fd_h1 = central_fd_grad(
            lambda q: prob.exact.grad(np.atleast_2d(q))[:, 1], pts[i])
        fd_H = np.array([fd_h0, fd_h1])
        assert np.max(np.abs(fd_H - H[i])) < 1e-5 * max(1.0,
                                                        np.abs(H[i]).max())


def test_lshape_harmonic_hessian_trace_free_laplacian():
    """u = Im(z^{4/3}) is harmonic away from the branch cut, so the Hessian
    must be trace-free."""
    prob = case_lshape_singular()
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(-0.9, -0.1, 50),
                           rng.uniform(0.1, 0.9, 50)])
    H = prob.exact.hess(pts)
    assert np.max(np.abs(H[:, 0, 0] + H[:, 1, 1])) < 1e-12


def test_square_smooth_f_vs_stencil():
    """f = biLap u at the centre checked with a 13-point biharmonic stencil
    plus Richardson extrapolation."""
    prob = case_square_smooth()
    u = lambda x, y: prob.exact.value(np.array([[x, y]]))[0]
    x0 = y0 = 0.5

    def bilap_stencil(h):
        # standard 13-point discrete bilaplacian
        c = 20 * u(x0, y0)
        c -= 8 * (u(x0 + h, y0) + u(x0 - h, y0) + u(x0, y0 + h) + u(x0, y0 - h))
        c += 2 * (u(x0 + h, y0 + h) + u(x0 - h, y0 + h) + u(x0 + h, y0 - h)
                  + u(x0 - h, y0 - h))
        c += (u(x0 + 2 * h, y0) + u(x0 - 2 * h, y0) + u(x0, y0 + 2 * h)
              + u(x0, y0 - 2 * h))
        return c / h**4

    a1 = bilap_stencil(2e-2)
    a2 = bilap_stencil(1e-2)
    rich = (4 * a2 - a1) / 3.0  # O(h^2) stencil -> Richardson
    want = prob.f(np.array([[x0, y0]]))[0]
    assert abs(rich - want) < 1e-5 * max(1.0, abs(want))


def test_square_smooth_clamped_boundary():
    prob = case_square_smooth()
    t = np.linspace(0.0, 1.0, 17)
    edges = [np.column_stack([t, np.zeros_like(t)]),
             np.column_stack([t, np.ones_like(t)]),
             np.column_stack([np.zeros_like(t), t]),
             np.column_stack([np.ones_like(t), t])]
    for pts in edges:
        assert np.max(np.abs(prob.exact.value(pts))) < 1e-14
        assert np.max(np.abs(prob.exact.grad(pts))) < 1e-13


def test_boundary_data_from_exact():
    prob = case_polynomial(3)
    pts = np.array([[0.0, 0.3], [1.0, 0.7]])
    assert np.allclose(prob.g_dirichlet(pts), prob.exact.value(pts))
    n = np.array([1.0, 0.0])
    assert np.allclose(prob.g_neumann(pts, n), prob.exact.grad(pts) @ n)


def test_polynomial_reproducible():
    p1 = case_polynomial(3)
    p2 = case_polynomial(3)
    pts = np.random.default_rng(0).uniform(size=(20, 2))
    assert np.array_equal(p1.exact.value(pts), p2.exact.value(pts))


def test_get_problem_dispatch():
    assert get_problem("lshape").name == "lshape"
    assert get_problem("square-smooth").name == "square-smooth"
    assert get_problem("poly-4").name == "poly-4"
    with pytest.raises(KeyError):
        get_problem("mystery")


def test_assumption1_smoke():
    rows, slope = assumption1_study(1.01, range(0, 4), levels=12)
    ks = [r[0] for r in rows]
    errs = np.array([r[1] for r in rows])
    assert ks == [0, 1, 2, 3]
    assert np.all(errs > 0)
    assert np.all(np.diff(errs) < 0)  # monotone decay in k
    assert slope < -0.3
