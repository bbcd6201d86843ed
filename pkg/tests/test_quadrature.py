import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gausstorsion.errors import NumericalError
from gausstorsion.quadrature import (adaptive_gauss_legendre, gauss_legendre, signed_areas,
                                     triangle_points, triangle_rule)


def _monomial_integral(p, q):
    # int over the reference triangle (0,0),(1,0),(0,1) of x^p y^q
    from math import factorial
    return factorial(p) * factorial(q) / factorial(p + q + 2)


@pytest.mark.parametrize("order", [1, 2, 4, 5, 6])
def test_triangle_rule_exact_for_degree(order):
    bary, w = triangle_rule(order)
    assert np.isclose(w.sum(), 1.0, atol=1e-14)
    assert np.all(bary >= 0) and np.allclose(bary.sum(1), 1.0)
    tri = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    pts, wts = triangle_points(tri, order)
    x, y = pts[0].T
    for p in range(order + 1):
        for q in range(order + 1 - p):
            got = np.sum(wts[0] * x ** p * y ** q)
            assert got == pytest.approx(_monomial_integral(p, q), rel=1e-12, abs=1e-15)


def test_triangle_rule_rounds_up_and_rejects_high_orders():
    assert len(triangle_rule(3)[1]) == len(triangle_rule(4)[1])
    with pytest.raises(ValueError):
        triangle_rule(7)


def test_signed_areas_orientation():
    tri = np.array([[[0, 0], [1, 0], [0, 1]], [[0, 0], [0, 1], [1, 0]]], dtype=float)
    assert np.allclose(signed_areas(tri), [0.5, -0.5])


def test_gauss_legendre_exact_polynomials():
    x, w = gauss_legendre(8)
    for k in range(16):
        assert np.dot(w, x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_adaptive_gl_known_integrals():
    assert adaptive_gauss_legendre(np.exp, 0.0, 1.0) == pytest.approx(np.e - 1, rel=1e-14)
    # reversed limits change the sign
    assert adaptive_gauss_legendre(np.sin, np.pi, 0.0) == pytest.approx(-2.0, rel=1e-14)
    assert adaptive_gauss_legendre(np.cos, 1.0, 1.0) == 0.0
    # a sharp peak needs refinement
    f = lambda x: 1.0 / (1e-4 + (x - 0.3) ** 2)
    exact = (np.arctan(0.7 / 1e-2) + np.arctan(0.3 / 1e-2)) / 1e-2
    assert adaptive_gauss_legendre(f, 0.0, 1.0) == pytest.approx(exact, rel=1e-11)


def test_adaptive_gl_reports_nonconvergence():
    with pytest.raises(NumericalError):
        adaptive_gauss_legendre(lambda x: np.sign(x - 1 / 3) + 0 * x, 0.0, 1.0,
                                abs_tol=1e-300, rel_tol=1e-300, max_rounds=5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 4))
def test_adaptive_gl_polynomial_property(a, width):
    b = a + width
    f = lambda x: 3 * x ** 2 - 2 * x + 1
    exact = (b ** 3 - b ** 2 + b) - (a ** 3 - a ** 2 + a)
    assert adaptive_gauss_legendre(f, a, b) == pytest.approx(exact, rel=1e-12, abs=1e-13)
