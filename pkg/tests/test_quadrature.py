"""Quadrature rules: exactness, positivity, graded composites."""

import numpy as np
import pytest
from scipy import integrate

from hho2d.quadrature import (QuadratureError, edge_rule, graded_edge_rule,
                              graded_triangle_rule, integrate_graded,
                              triangle_area, triangle_rule)

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SKEW = np.array([[0.2, -0.1], [1.3, 0.4], [0.1, 1.1]])


def exact_ref_monomial(a, b):
    """Integral of x^a y^b over the reference triangle."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 5, 8, 12, 16, 20])
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(REF, degree)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 0.5) < 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            ref = exact_ref_monomial(a, b)
            assert abs(val - ref) <= 1e-13 * max(abs(ref), 1.0)


def test_triangle_rule_skewed_area():
    rule = triangle_rule(SKEW, 7)
    assert abs(rule.weights.sum() - triangle_area(SKEW)) < 1e-13


@pytest.mark.parametrize("degree", [0, 1, 4, 9, 15])
def test_edge_rule_exactness(degree):
    p0, p1 = np.array([0.3, -0.2]), np.array([1.1, 0.9])
    rule = edge_rule(p0, p1, degree)
    L = np.hypot(*(p1 - p0))
    assert np.all(rule.weights > 0)
    for m in range(degree + 1):
        # integrate t^m along the segment (arclength measure)
        val = rule.weights @ rule.tparams**m
        assert abs(val - L / (m + 1)) < 1e-13 * L


def test_graded_edge_total_weight():
    rule = graded_edge_rule([0.0, 0.0], [1.0, 0.0], (0.3, 0.0), 6)
    assert abs(rule.weights.sum() - 1.0) < 1e-12


def test_graded_edge_constant():
    rule = graded_edge_rule([0.0, 0.0], [1.0, 0.0], (0.0, 0.0), 4)
    assert abs(rule.weights @ np.ones(rule.weights.size) - 1.0) < 1e-12


def test_graded_edge_singular_power():
    # int_0^1 r^{0.02} dr = 1/1.02
    rule = graded_edge_rule([0.0, 0.0], [1.0, 0.0], (0.0, 0.0), 8)
    val = rule.weights @ rule.points[:, 0] ** 0.02
    assert abs(val - 1.0 / 1.02) < 1e-10


def test_graded_edge_off_segment_fallback():
    rule = graded_edge_rule([0.0, 0.0], [1.0, 0.0], (0.5, 0.7), 4)
    plain = edge_rule([0.0, 0.0], [1.0, 0.0], 4)
    assert rule.points.shape == plain.points.shape


def test_graded_triangle_total_weight():
    for s in [(0.0, 0.0), (0.5, 0.0), (0.25, 0.25)]:
        rule = graded_triangle_rule(REF, s, 6)
        assert abs(rule.weights.sum() - 0.5) < 1e-12


def test_graded_triangle_edge_interior_singularity():
    """r^{-2/3} about an edge-interior point vs a nested adaptive oracle."""
    s = np.array([0.5, 0.0])

    def f(pts):
        return ((pts[:, 0] - s[0]) ** 2 + (pts[:, 1] - s[1]) ** 2) ** (-1.0 / 3.0)

    rule = graded_triangle_rule(REF, s, 24, levels=60)
    val = float(rule.weights @ f(rule.points))

    def inner(y):
        g = lambda x: ((x - 0.5) ** 2 + y**2) ** (-1.0 / 3.0)
        v, _ = integrate.quad(g, 0.0, 1.0 - y, points=[min(0.5, 1.0 - y)],
                              limit=200)
        return v

    oracle, _ = integrate.quad(inner, 0.0, 1.0, limit=200)
    assert abs(val - oracle) <= 1e-7 * abs(oracle)


def test_integrate_graded_constant():
    val = integrate_graded(
        lambda pts: np.ones(pts.shape[0]),
        lambda lev: graded_edge_rule([0, 0], [1, 0], (0, 0), 4, levels=lev),
        levels=4)
    assert abs(val - 1.0) < 1e-12


def test_integrate_graded_nonconvergent_raises():
    # 1/r is not integrable along the edge: the tail never settles
    def f(pts):
        r = np.hypot(pts[:, 0], pts[:, 1])
        return 1.0 / r

    with pytest.raises(QuadratureError):
        integrate_graded(
            f, lambda lev: graded_edge_rule([0, 0], [1, 0], (0, 0), 8,
                                            levels=lev),
            levels=4, max_levels=32)
