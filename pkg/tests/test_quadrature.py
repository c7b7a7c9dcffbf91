from fractions import Fraction
from math import factorial

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from mtfem.errors import InvalidArgumentError, UnsupportedError
from mtfem.quadrature import (
    MAX_DEGREE,
    check_exactness,
    embed_points,
    evaluate_projection,
    homogeneous_exponents,
    project_l2,
    reference_moment,
    rule_simplex,
)


def _sympy_simplex_integral(expr, xs):
    """Integral over the unit reference simplex by iterated integration."""
    d = len(xs)
    out = expr
    for k in range(d - 1, -1, -1):
        upper = 1 - sum(xs[:k])
        out = sp.integrate(out, (xs[k], 0, upper))
    return out


@pytest.mark.parametrize("alpha", [(0, 0, 0), (1, 0, 0), (2, 1, 0), (1, 1, 1), (3, 0, 2), (0, 0, 0, 0), (1, 2, 0, 1)])
def test_reference_moment_matches_symbolic_integral(alpha):
    d = len(alpha) - 1
    xs = sp.symbols(f"x0:{d}")
    lam = [1 - sum(xs)] + list(xs)
    expr = sp.Integer(1)
    for l, a in zip(lam, alpha):
        expr *= l**a
    exact = _sympy_simplex_integral(expr, xs)
    assert Fraction(int(sp.numer(exact)), int(sp.denom(exact))) == Fraction(reference_moment(alpha)).limit_denominator(10**12)


@settings(max_examples=40, deadline=None)
@given(dim=st.integers(1, 3), degree=st.integers(0, 24))
def test_rules_integrate_monomials_exactly(dim, degree):
    rule = rule_simplex(dim, degree)
    assert check_exactness(rule, tol=1e-12) <= 1e-12
    assert rule.weights.sum() == pytest.approx(1.0 / factorial(dim), rel=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    assert np.all(rule.points >= -1e-14)


def test_rule_against_symbolic_polynomial():
    x, y = sp.symbols("x y")
    poly = 3 * x**5 * y**2 - 7 * x * y**6 + x**3 - 2 * y + 5
    exact = float(_sympy_simplex_integral(poly, (x, y)))
    rule = rule_simplex(2, 7)
    p = rule.points[:, 1:]
    f = sp.lambdify((x, y), poly, "numpy")
    assert np.dot(rule.weights, f(p[:, 0], p[:, 1])) == pytest.approx(exact, rel=1e-13)


def test_mean_weights_sum_to_one():
    for dim in (1, 2, 3):
        assert rule_simplex(dim, 9).mean_weights.sum() == pytest.approx(1.0)


def test_degree_limits():
    with pytest.raises(InvalidArgumentError):
        rule_simplex(2, -1)
    with pytest.raises(UnsupportedError):
        rule_simplex(2, MAX_DEGREE + 1)


def test_homogeneous_exponents_count():
    from math import comb

    for n in (2, 3, 4):
        for k in range(6):
            ex = homogeneous_exponents(n, k)
            assert len(ex) == comb(k + n - 1, n - 1)
            assert all(sum(e) == k for e in ex)


def test_embed_points_on_face():
    rule = rule_simplex(2, 4)
    pts = embed_points(rule.points, (0, 2, 3), 4)
    assert pts.shape == (rule.size, 4)
    assert np.allclose(pts[:, 1], 0.0)
    assert np.allclose(pts.sum(axis=1), 1.0)


def test_l2_projection_reproduces_polynomials():
    verts = np.array([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]])

    def f(x):
        return 1.0 + x[:, 0] ** 2 - 3.0 * x[:, 0] * x[:, 1]

    coeffs, basis = project_l2(2, verts, f)
    rule = rule_simplex(2, 6)
    vals = evaluate_projection(coeffs, basis, rule.points)
    x = rule.points @ verts
    assert np.allclose(vals, f(x), atol=1e-12)
