import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import linprog

from pgspline.equioscillation import (base_grid, best_weighted_poly, chebyshev_reference, exchange_reference,
                                      to_monomial, weighted_extrema)
from pgspline.errors import ParameterError
from pgspline.weights import parse_weight


def lp_minimax(h, f, m, a, size=4001):
    """Discrete weighted minimax on a dense grid as a linear program in (c, E)."""
    t = np.linspace(0, a, size)
    V = cheb.chebvander(2 * t / a - 1, m) / f(t)[:, None]
    y = h(t) / f(t)
    ones = np.ones((size, 1))
    A = np.vstack([np.hstack([V, -ones]), np.hstack([-V, -ones])])
    b = np.r_[y, -y]
    cost = np.r_[np.zeros(m + 1), 1.0]
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * (m + 2), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    return res.x[-1]


def test_square_by_line():
    res = best_weighted_poly(lambda t: t**2, parse_weight("const:1"), 1, 4.0)
    np.testing.assert_allclose(res.deviation, 2.0, rtol=1e-12)
    np.testing.assert_allclose(res.poly, [-2.0, 4.0], atol=1e-11)
    np.testing.assert_allclose(res.alternation_points, [0, 2, 4], atol=1e-7)


def test_identity_by_constant_under_exponential_weight():
    # max |t - c| e^t on [0, 1] is levelled at 0 and 1: c = e/(1+e)
    res = best_weighted_poly(lambda t: t, parse_weight("exp:1"), 0, 1.0)
    np.testing.assert_allclose(res.deviation, math.e / (1 + math.e), rtol=1e-12)
    np.testing.assert_allclose(res.poly, [math.e / (1 + math.e)], rtol=1e-12)


def test_degree_zero_const_is_midrange():
    res = best_weighted_poly(np.sin, parse_weight("const:1"), 0, 4.0)
    np.testing.assert_allclose(res.poly, [0.5 * (1 + math.sin(4.0))], rtol=1e-12)
    np.testing.assert_allclose(res.deviation, 0.5 * (1 - math.sin(4.0)), rtol=1e-12)


@given(st.integers(0, 3), st.sampled_from(["const:1", "exp:0.5", "pow:2"]), st.floats(1.0, 5.0),
       st.sampled_from(["exp", "sin", "abs"]))
def test_matches_linear_programming_oracle(m, wspec, a, kind):
    f = parse_weight(wspec)
    h = {"exp": lambda t: np.exp(0.7 * t), "sin": lambda t: np.sin(2.3 * t),
         "abs": lambda t: np.abs(t - 0.37 * a) ** 1.5}[kind]
    res = best_weighted_poly(h, f, m, a, breakpoints=(0.37 * a,))
    oracle = lp_minimax(h, f, m, a)
    # the grid LP can only under-estimate the continuous deviation
    assert res.deviation >= oracle * (1 - 1e-9)
    np.testing.assert_allclose(res.deviation, oracle, rtol=1e-5)
    assert len(res.alternation_points) >= m + 2


@given(st.integers(1, 4), st.floats(0.5, 10.0))
def test_chebyshev_polynomial_error(m, a):
    # x^(m+1) on [0, a]: deviation 2 (a/4)^(m+1)
    res = best_weighted_poly(lambda t: t ** (m + 1), parse_weight("const:1"), m, a)
    np.testing.assert_allclose(res.deviation, 2 * (a / 4) ** (m + 1), rtol=1e-10)
    np.testing.assert_allclose(res.alternation_points, chebyshev_reference(a, m + 2), atol=1e-6 * a)


def test_residual_alternates_at_levelled_height():
    f = parse_weight("pow:1")
    h = np.cos
    res = best_weighted_poly(h, f, 2, 6.0)
    e = (h(np.array(res.alternation_points)) - np.polynomial.polynomial.polyval(res.alternation_points, res.poly))
    w = e / f(np.array(res.alternation_points))
    np.testing.assert_allclose(np.abs(w), res.deviation, rtol=1e-9)
    assert np.all(np.sign(w[1:]) == -np.sign(w[:-1]))


def test_extrema_of_cosine():
    ext = weighted_extrema(np.cos, parse_weight("const:1"), 2 * math.pi)
    np.testing.assert_allclose(ext.points, [0, math.pi, 2 * math.pi], atol=1e-9)
    np.testing.assert_allclose(ext.values, [1, -1, 1], atol=1e-14)


def test_zero_residual_reports_shortage():
    ext = weighted_extrema(lambda t: 0 * t, parse_weight("const:1"), 1.0, count_hint=3)
    assert ext.shortage and ext.points == []
    ext = weighted_extrema(np.cos, parse_weight("const:1"), 1.0, count_hint=3)
    assert ext.shortage and len(ext.points) == 1


def test_breakpoints_are_on_the_grid():
    t = base_grid(3.0, (0.123456789,), size=16)
    assert 0.123456789 in t and t[0] == 0 and t[-1] == 3.0


def test_to_monomial_round_trip():
    c = np.array([0.3, -1.2, 0.5, 2.0])
    x = np.linspace(0, 5, 9)
    np.testing.assert_allclose(np.polynomial.polynomial.polyval(x, to_monomial(c, 5.0)),
                               cheb.chebval(2 * x / 5 - 1, c), rtol=1e-12, atol=1e-12)


def test_exchange_keeps_alternation():
    pts = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    vals = np.array([0.5, -1.0, 0.9, -0.2, 0.95])
    ref = exchange_reference(np.array([0.0, 2.0, 4.0]), 1.0, pts, vals, 1)
    np.testing.assert_array_equal(ref, [0.0, 1.0, 2.0])
    # fewer extrema than needed: the global maximizer is swapped in with its sign
    ref = exchange_reference(np.array([0.0, 2.0, 4.0]), 1.0, np.array([3.0]), np.array([-2.0]), 1)
    np.testing.assert_array_equal(ref, [0.0, 3.0, 4.0])


def test_bad_arguments():
    with pytest.raises(ParameterError):
        best_weighted_poly(np.sin, parse_weight("const:1"), -1, 1.0)
    with pytest.raises(ParameterError):
        best_weighted_poly(np.sin, parse_weight("const:1"), 1, 0.0)
