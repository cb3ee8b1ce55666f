import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from pgspline.calculus import (CLASS_FINITE, CLASS_INCONCLUSIVE, CLASS_INFINITE, DIVERGENT, FINITE,
                               NOT_EVALUATED, build_primitive_table, bounded_primitives, classify_finiteness,
                               compute_A, eq6_integrand, eval_P, improper_integral, sup_ratio)
from pgspline.errors import ImproperIntegralError, ParameterError, PreconditionError
from pgspline.weights import TailClass, parse_weight, weight_from_function

SQRT3 = math.sqrt(3.0)


def test_const_primitives_are_monomials():
    tab = build_primitive_table(parse_weight("const:1"), 4, 10.0)
    t = np.linspace(0, 10, 37)
    for k in range(5):
        np.testing.assert_allclose(tab(t, k), t**k / math.factorial(k), rtol=1e-13, atol=1e-13)


@given(st.floats(0.2, 3.0), st.floats(0.0, 8.0))
def test_exp_forward_primitive(lam, t):
    tab = build_primitive_table(parse_weight(f"exp:{lam!r}"), 2, 10.0)
    g1 = (1 - math.exp(-lam * t)) / lam
    g2 = t / lam - (1 - math.exp(-lam * t)) / lam**2
    np.testing.assert_allclose(tab(t, 1), g1, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(tab(t, 2), g2, rtol=1e-11, atol=1e-13)


@given(st.floats(0.2, 3.0))
def test_exp_A_and_P_closed_form(lam):
    g = parse_weight(f"exp:{lam!r}")
    A = compute_A(g, 3)
    np.testing.assert_allclose([a.value for a in A], [lam ** -(k + 1) for k in range(3)], rtol=1e-9)
    t = np.linspace(0, 6, 13)
    for k in (1, 2, 3):
        np.testing.assert_allclose(eval_P(g, A, k, t), (-1) ** k * np.exp(-lam * t) / lam**k, rtol=1e-10)


def test_gauss_A_closed_form_and_quad_oracle(gauss_pair):
    _, g = gauss_pair
    A = compute_A(g, 2)
    # g is the derivative of -u exp(-u^2/2) with u = t + sqrt3
    np.testing.assert_allclose(A[0].value, SQRT3 * math.exp(-1.5), rtol=1e-10)
    np.testing.assert_allclose(A[1].value, math.exp(-1.5), rtol=1e-10)
    oracle = integrate.quad(lambda t: (t + SQRT3) * math.exp(-0.5 * (t + SQRT3) ** 2), 0, np.inf)[0]
    np.testing.assert_allclose(A[1].value, oracle, rtol=1e-10)


def test_gauss_second_primitive_is_f(gauss_pair):
    f, g = gauss_pair
    P = bounded_primitives(g, 2)
    t = np.linspace(0, 20, 81)
    np.testing.assert_allclose(P(t, 2), f(t), rtol=1e-10)
    np.testing.assert_allclose(P(t, 1), -(t + SQRT3) * f(t), rtol=1e-10)


@pytest.mark.parametrize("p", [3.0, 4.5])
def test_pow_A_and_J(p):
    g = parse_weight(f"pow:{p}")
    A = compute_A(g, 2)
    np.testing.assert_allclose(A[0].value, 1 / (p - 1), rtol=1e-9)
    np.testing.assert_allclose(A[1].value, 1 / ((p - 1) * (p - 2)), rtol=1e-8)
    P = bounded_primitives(g, 2)
    t = np.array([0.0, 1.0, 5.0, 50.0, 2000.0])
    np.testing.assert_allclose(P.J(t, 2), (1 + t) ** (2 - p) / ((p - 1) * (p - 2)), rtol=1e-8)


def test_recursion_form_matches_tail_form(exp1):
    A = compute_A(exp1, 3)
    tab = build_primitive_table(exp1, 3, 20.0)
    t = np.linspace(0, 5, 11)
    for k in (1, 2, 3):
        np.testing.assert_allclose(eq6_integrand(tab, A, k, t), np.exp(-t), rtol=1e-9, atol=1e-12)


def test_divergent_A_stops_the_list():
    A = compute_A(parse_weight("pow:1.5"), 3)
    assert A[0].finite
    assert A[1].status == DIVERGENT
    assert A[2].status == NOT_EVALUATED
    with pytest.raises(PreconditionError):
        eval_P(parse_weight("pow:1.5"), A, 2, 1.0)


def test_improper_integral_modes():
    assert improper_integral(lambda t: 1.0, certified=False).status == DIVERGENT
    iv = improper_integral(lambda t: math.exp(-t), certified=None)
    assert iv.finite and iv.heuristic
    np.testing.assert_allclose(iv.value, 1.0, rtol=1e-9)
    with pytest.raises(ImproperIntegralError):
        improper_integral(lambda t: 1.0 + t, certified=None)


@pytest.mark.parametrize("f, g, r, cls, K", [
    ("gauss-paper-f", "gauss-paper-g", 1, CLASS_INFINITE, None),
    ("gauss-paper-f", "gauss-paper-g", 2, CLASS_FINITE, 1.0),
    ("const:1", "exp:1", 2, CLASS_FINITE, 1.0),
    ("exp:1", "exp:1", 2, CLASS_FINITE, 1.0),
    ("const:1", "const:1", 2, CLASS_INFINITE, None),
    ("exp:1", "exp:0.5", 2, CLASS_INFINITE, None),
    ("pow:1", "pow:4", 2, CLASS_FINITE, 1 / 6),
])
def test_classification(f, g, r, cls, K):
    rep = classify_finiteness(parse_weight(f), parse_weight(g), r)
    assert rep.classification == cls
    if K is not None:
        np.testing.assert_allclose(rep.K_r.value, K, rtol=1e-9)


def test_gauss_r1_reports_divergent_sup_ratio(gauss_pair):
    rep = classify_finiteness(*gauss_pair, 1).to_json()
    assert rep["K_r"] == DIVERGENT
    assert rep["A"][0] == pytest.approx(SQRT3 * math.exp(-1.5))


def test_const_const_serializes_flags():
    doc = classify_finiteness(parse_weight("const:1"), parse_weight("const:1"), 2).to_json()
    assert doc["A"] == [DIVERGENT, NOT_EVALUATED]
    assert doc["K_r"] == NOT_EVALUATED


def test_untailed_weight_is_heuristic_or_inconclusive():
    g = weight_from_function(lambda t: np.exp(-np.asarray(t)), "expish")
    f = weight_from_function(lambda t: np.exp(-0.5 * np.asarray(t)), "slow")
    rep = classify_finiteness(f, g, 2)
    assert rep.classification in (CLASS_FINITE, CLASS_INCONCLUSIVE)
    assert all(rep.diagnostics["A_heuristic"])


def test_sup_ratio_finds_interior_maximum():
    # |P_2| = e^{-t}, f = (1+t)^{-1}: ratio (1+t) e^{-t} peaks at t = 0
    P = bounded_primitives(parse_weight("exp:1"), 2)
    s = sup_ratio(P, 2, parse_weight("pow:1"))
    assert s.status == FINITE
    np.testing.assert_allclose(s.value, 1.0, rtol=1e-10)
    # f = e^{-t}/(1+t)^{-1}... use tail with an interior peak instead
    f = weight_from_function(lambda t: np.exp(-np.asarray(t)) * (1 + np.asarray(t)) ** 2 / (1 + np.asarray(t) ** 2),
                             tail=TailClass(rate=1.0))
    s = sup_ratio(P, 2, f)
    t = np.linspace(0, 10, 100001)
    oracle = np.max((1 + t**2) / (1 + t) ** 2)
    assert s.value == pytest.approx(max(oracle, 1.0), rel=1e-8)


def test_parameter_checks():
    with pytest.raises(ParameterError):
        compute_A(parse_weight("exp:1"), 0)
    with pytest.raises(ParameterError):
        build_primitive_table(parse_weight("exp:1"), 2, -1.0)
