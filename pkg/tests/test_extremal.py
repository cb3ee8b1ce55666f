import math

import numpy as np
import pytest
from numpy.polynomial import chebyshev as cheb
from scipy.optimize import linprog, minimize_scalar

from pgspline.errors import DeltaRangeError, ParameterError
from pgspline.extremal import (ExtremalSolveConfig, initial_knots, phi, phi_curve, solve_a_for_delta,
                               solve_extremal)
from pgspline.gspline import PerfectGSpline, check_certificate, count_sign_changes, expected_signs
from pgspline.modulus import sign_cascade_at_zero
from pgspline.weights import parse_weight

SQ2 = math.sqrt(2.0)


def chebyshev_phi(r, a):
    return a**r / (math.factorial(r) * 2 ** (2 * r - 1))


@pytest.mark.parametrize("r", [1, 2, 3, 4])
@pytest.mark.parametrize("a", [1.0, 2.0, 4.0])
def test_no_knots_is_scaled_chebyshev(const1, r, a):
    res = solve_extremal(r, 0, a, const1, const1)
    np.testing.assert_allclose(res.deviation, chebyshev_phi(r, a), rtol=1e-12)
    assert len(res.certificate.points) == r + 1


@pytest.mark.parametrize("n", [1, 2, 5])
def test_first_order_with_knots(const1, n):
    res = solve_extremal(1, n, 3.0, const1, const1)
    np.testing.assert_allclose(res.deviation, 3.0 / (2 * (n + 1)), rtol=1e-10)
    np.testing.assert_allclose(res.spline.knots, 3.0 * np.arange(1, n + 1) / (n + 1), rtol=1e-8)


def landau_spline(n):
    """Explicit unit-deviation perfect spline with G(0)=1, G'(0)=-2, G''=+-1."""
    a = 4 + 2 * SQ2 * n
    knots = tuple(2 + SQ2 + 2 * SQ2 * k for k in range(n))
    return PerfectGSpline(2, a, knots, 1, (-1.0, 2.0), parse_weight("const:1"))


@pytest.mark.parametrize("n", [0, 1, 3, 6])
def test_landau_explicit_spline_is_extremal(const1, n):
    ref = landau_spline(n)
    cert = check_certificate(ref, const1)
    np.testing.assert_allclose(cert.deviation, 1.0, rtol=1e-12)
    assert cert.normalized
    res = solve_extremal(2, n, ref.a, const1, const1)
    np.testing.assert_allclose(res.deviation, 1.0, rtol=1e-10)
    np.testing.assert_allclose(res.spline.knots, ref.knots, atol=1e-8)
    np.testing.assert_allclose(res.spline.poly, ref.poly, atol=1e-8)


def test_knot_scan_oracle(const1):
    # brute force over the single knot, discrete minimax LP for the linear part
    a = 8.0
    t = np.linspace(0, a, 3001)
    V = cheb.chebvander(2 * t / a - 1, 1)
    cost = np.r_[0.0, 0.0, 1.0]

    def dev(u):
        S = np.where(t <= u, t**2 / 2, u**2 / 2 + u * (t - u) - (t - u) ** 2 / 2)
        A = np.vstack([np.c_[V, -np.ones_like(t)], np.c_[-V, -np.ones_like(t)]])
        res = linprog(cost, A_ub=A, b_ub=np.r_[S, -S], bounds=[(None, None)] * 3, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10})
        return res.x[-1]

    scan = np.linspace(0.5, 7.5, 57)
    u0 = scan[np.argmin([dev(u) for u in scan])]
    best = minimize_scalar(dev, bounds=(u0 - 0.2, u0 + 0.2), method="bounded", options={"xatol": 1e-7})
    res = solve_extremal(2, 1, a, const1, const1)
    np.testing.assert_allclose(res.deviation, best.fun, rtol=1e-6)
    np.testing.assert_allclose(res.spline.knots, [best.x], atol=1e-3)
    np.testing.assert_allclose(res.deviation, (a / (4 + 2 * SQ2)) ** 2, rtol=1e-10)


@pytest.mark.parametrize("r, n", [(2, 1), (2, 3), (3, 2)])
@pytest.mark.parametrize("wf, wg", [("const:1", "const:1"), ("exp:1", "exp:1"), ("const:1", "exp:1")])
def test_certificates(r, n, wf, wg):
    f, g = parse_weight(wf), parse_weight(wg)
    res = solve_extremal(r, n, 5.0, f, g)
    cert = res.certificate
    assert len(cert.points) == n + r + 1
    assert cert.points[-1] == 5.0
    assert cert.weighted_residual_extrema_gap <= 1e-6 * cert.deviation
    assert cert.signs == expected_signs(r, n)
    assert sign_cascade_at_zero(res.spline)[0]
    for d in range(r + 1):
        assert count_sign_changes(res.spline, d) == n + r - d


@pytest.mark.parametrize("r, n", [(2, 0), (2, 2), (3, 1)])
def test_scaling_law_for_constant_weights(const1, r, n):
    # x(t) -> lam^r x(t/lam) maps extremal splines on [0, a] to [0, lam a]
    p1 = phi(r, n, 3.0, const1, const1).phi
    p2 = phi(r, n, 7.5, const1, const1).phi
    np.testing.assert_allclose(p2, (7.5 / 3.0) ** r * p1, rtol=1e-9)


@pytest.mark.parametrize("wf, wg", [("const:1", "const:1"), ("exp:1", "exp:1"), ("pow:1", "pow:2"),
                                    ("const:1", "exp:1"), ("exp:0.5", "const:1")])
def test_phi_increases_with_a(wf, wg):
    f, g = parse_weight(wf), parse_weight(wg)
    rows = phi_curve(2, 1, np.linspace(1.0, 6.0, 10), f, g)
    vals = [p for _, p, _ in rows]
    assert all(s == "ok" for _, _, s in rows)
    assert np.all(np.diff(vals) > 0)


def test_more_knots_on_the_same_interval_sit_further_left(const1):
    # the n-knot extremal spline against an (n+1)-knot spline of no larger norm on [0, a]
    for wg in ("const:1", "exp:0.5"):
        g = parse_weight(wg)
        for n in (1, 2, 3):
            u = solve_extremal(2, n, 9.0, const1, g).spline.knots
            v = solve_extremal(2, n + 1, 9.0, const1, g).spline.knots
            assert np.all(np.array(v[:n]) < np.array(u) - 1e-6)


def test_delta_scale_grows_with_n(const1):
    scales = [solve_a_for_delta(2, n, 1.0, const1, const1) for n in range(5)]
    np.testing.assert_allclose(scales, 4 + 2 * SQ2 * np.arange(5), rtol=1e-9)
    assert np.all(np.diff(scales) > 0)


def test_delta_scale_knots_coincide_across_n(const1):
    # with unit deviation fixed, adding a knot leaves the earlier knots where they were
    prev = ()
    for n in range(1, 5):
        _, res = solve_a_for_delta(2, n, 1.0, const1, const1, return_solution=True)
        np.testing.assert_allclose(res.spline.knots[: len(prev)], prev, atol=1e-8)
        prev = res.spline.knots


def test_solve_a_for_delta_round_trip(exp1):
    a, res = solve_a_for_delta(2, 2, 0.3, exp1, exp1, return_solution=True)
    np.testing.assert_allclose(phi(2, 2, a, exp1, exp1).phi, 0.3, rtol=1e-9)
    assert res.spline.a == a


def test_delta_above_the_finite_limit(const1, exp1):
    # phi_{2,0}(inf) = 1/2 for f = 1, g = e^{-t}
    with pytest.raises(DeltaRangeError, match="FINITE"):
        solve_a_for_delta(2, 0, 2.0, const1, exp1, max_a=2.0**10)


@pytest.mark.parametrize("n, a, expected", [
    (0, 1.0, 0.23417371662718903), (0, 2.0, 0.8507761370903602), (0, 3.0, 0.9953761525901046),
    (0, 4.0, 0.999959671379807), (1, 4.0, 0.9814032322659321), (2, 4.0, 0.8808399022110411),
])
def test_gauss_regression_anchors(gauss_pair, n, a, expected):
    res = solve_extremal(2, n, a, *gauss_pair)
    np.testing.assert_allclose(res.deviation, expected, rtol=1e-7)


def test_gauss_no_knot_case_against_lp(gauss_pair):
    # S(t) = f(t) - f(0) + sqrt3 f(0) t, so phi is the weighted distance from f to lines
    f, g = gauss_pair
    a = 3.0
    t = np.linspace(0, a, 4001)
    V = cheb.chebvander(2 * t / a - 1, 1) / f(t)[:, None]
    y = np.ones_like(t)
    A = np.vstack([np.c_[V, -np.ones_like(t)], np.c_[-V, -np.ones_like(t)]])
    lp = linprog([0, 0, 1], A_ub=A, b_ub=np.r_[y, -y], bounds=[(None, None)] * 3, method="highs",
                 options={"primal_feasibility_tolerance": 1e-10}).x[-1]
    np.testing.assert_allclose(solve_extremal(2, 0, a, f, g).deviation, lp, rtol=1e-6)


def test_gauss_values_at_zero_approach_tail_integrals(gauss_pair):
    s = solve_extremal(2, 0, 4.0, *gauss_pair).spline
    np.testing.assert_allclose(abs(s(0.0)), math.exp(-1.5), rtol=1e-4)
    np.testing.assert_allclose(abs(s(0.0, 1)), math.sqrt(3) * math.exp(-1.5), rtol=1e-4)


def test_strict_mode_reports_agreement(exp1):
    res = solve_extremal(2, 2, 5.0, exp1, exp1, ExtremalSolveConfig(strict=True))
    assert res.diagnostics["uniqueness"]["deviation_diff"] < 1e-6


@pytest.mark.parametrize("policy", ["equidistributed", "mass-quantile", "uniform"])
def test_initial_knot_policies(exp1, policy):
    k = initial_knots(exp1, 4, 6.0, policy, exp1, 2)
    assert len(k) == 4 and np.all(np.diff(k) > 0) and 0 < k[0] and k[-1] < 6.0


def test_phi_curve_flags_failures(gauss_pair):
    rows = phi_curve(2, 0, [8.0, 2.0], *gauss_pair)
    assert [a for a, _, _ in rows] == [2.0, 8.0]
    assert rows[0][2] == "ok"
    assert rows[1][1] is None and rows[1][2].startswith("failed")


@pytest.mark.parametrize("args", [(0, 0, 1.0), (2, -1, 1.0), (2, 0, 0.0), (2, 0, -3.0), (2, 30, 10.0)])
def test_parameter_errors(const1, args):
    with pytest.raises(ParameterError):
        solve_extremal(*args, const1, const1)


def test_large_knot_count(const1):
    res = solve_extremal(2, 24, 4 + 2 * SQ2 * 24, const1, const1)
    np.testing.assert_allclose(res.deviation, 1.0, rtol=1e-8)
