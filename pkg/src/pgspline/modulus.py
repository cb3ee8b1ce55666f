"""Modulus of continuity of differentiation on weighted classes over the half-line.

``omega(D^k, delta)`` is the largest ``||x^(k)||_C`` over functions with
``||x||_{C,f} <= delta`` and ``|x^(r)| <= g``.  It is computed as the limit of
``|G^(k)(0)|`` along extremal splines: over the number of knots at fixed
deviation when the extremal deviation grows without bound on the half-line,
and over the interval length at fixed n otherwise.  The module also holds
the classical sharp constants and inequality checks used as oracles.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .calculus import (CLASS_FINITE, CLASS_INFINITE, bounded_primitives, classify_finiteness,
                       tail_class_of_P)
from .equioscillation import best_weighted_poly
from .errors import ConvergenceError, ParameterError, PreconditionError
from .extremal import ExtremalSolveConfig, solve_a_for_delta, solve_extremal
from .gspline import PerfectGSpline
from .parallel import ordered_map
from .weights import Weight, parse_weight

AT_PHI_INFINITY = "at-phi-infinity"
FLOOR_POSITIVE = "FLOOR-POSITIVE"
FLOOR_ZERO = "FLOOR-ZERO"
FLOOR_INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class ModulusQuery:
    k: int
    r: int
    f: Weight
    g: Weight
    delta: object = AT_PHI_INFINITY
    n: Optional[int] = None
    max_n: int = 16
    max_a: float = 2.0**16
    a_start: float = 1.0
    tol: float = 1e-3
    jobs: int = 1
    cfg: ExtremalSolveConfig = field(default_factory=ExtremalSolveConfig)

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 2:
            raise ParameterError("modulus needs r >= 2")
        if not 1 <= self.k <= self.r - 1:
            raise ParameterError(f"k must satisfy 1 <= k <= r-1 = {self.r - 1}, got {self.k}")
        if self.delta != AT_PHI_INFINITY and not float(self.delta) > 0:
            raise ParameterError("delta must be positive")
        if not self.tol > 0:
            raise ParameterError("tol must be positive")

    def to_json(self):
        return {"k": self.k, "r": self.r, "f": self.f.spec, "g": self.g.spec, "delta": self.delta,
                "n": self.n, "max_n": self.max_n, "max_a": self.max_a, "tol": self.tol}


@dataclass
class ModulusResult:
    query: ModulusQuery
    omega: Optional[float]
    trace: list
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    spline: Optional[PerfectGSpline] = None

    def to_json(self):
        return {
            "query": self.query.to_json(),
            "omega": self.omega,
            "trace": [{"param": p, "value": v} for p, v in self.trace],
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }


def _settled(values, tol, steps=3):
    """True once the last ``steps`` relative changes are all below tol."""
    if len(values) < steps + 1:
        return False
    tail = values[-(steps + 1):]
    return all(abs(b - a) <= tol * max(abs(b), 1e-300) for a, b in zip(tail, tail[1:]))


def _aitken(values):
    if len(values) < 3:
        return None
    x0, x1, x2 = values[-3:]
    den = x2 - 2 * x1 + x0
    if den == 0:
        return x2
    return x2 - (x2 - x1) ** 2 / den


def _delta_scale_point(q: ModulusQuery, n: int):
    a, res = solve_a_for_delta(q.r, n, float(q.delta), q.f, q.g, q.cfg, return_solution=True)
    return a, res


def omega_infinite_case(q: ModulusQuery, check: bool = True) -> ModulusResult:
    """``omega(D^k, delta)`` as the limit over n of ``|G^(k)(0)|`` at the delta-scale.

    For n = 0, 1, ... the interval length ``a_n`` with ``phi(a_n) = delta`` is
    solved and ``|G^(k)_{r,n,f,a_n}(0)|`` recorded; the sweep stops after
    three consecutive relative changes below ``q.tol``.  Raises
    ConvergenceError (trace attached) when ``q.max_n`` is reached first.
    """
    if q.delta == AT_PHI_INFINITY:
        raise ParameterError("the n-sweep needs a numeric delta")
    if check:
        rep = classify_finiteness(q.f, q.g, q.r)
        if rep.classification == CLASS_FINITE:
            raise PreconditionError("phi(inf) is finite for these weights; use the a-sweep")
    trace, scales, diag = [], [], {"solver": []}
    last = None
    n = 0
    batch = max(1, int(q.jobs))
    while n <= q.max_n:
        ns = list(range(n, min(n + batch, q.max_n + 1)))
        outs = ordered_map(functools.partial(_delta_scale_point, q), ns, q.jobs)
        for m, out in zip(ns, outs):
            if isinstance(out, Exception):
                raise ConvergenceError(f"delta-scale solve failed at n={m}: {out}",
                                       history=trace, best={"n": m}) from out
            a, res = out
            val = abs(float(res.spline.unchecked(0.0, q.k)))
            trace.append((m, val))
            scales.append(a)
            diag["solver"].append({"n": m, "a": a, "phi": res.deviation})
            last = res
            if _settled([v for _, v in trace], q.tol):
                return _finish(q, trace, True, diag, scales, last)
        n = ns[-1] + 1
    raise ConvergenceError(f"n-sweep did not settle by n={q.max_n}", history=trace,
                           best=_finish(q, trace, False, diag, scales, last).to_json())


def _finish(q, trace, converged, diag, params, res):
    vals = [v for _, v in trace]
    diag = dict(diag)
    diag["richardson"] = _aitken(vals)
    diag["scales"] = params
    diffs = np.diff(vals)
    diag["eventually_monotone"] = bool(len(diffs) < 2 or np.all(diffs[-2:] >= 0) or np.all(diffs[-2:] <= 0))
    return ModulusResult(q, vals[-1] if vals else None, trace, converged, diag, res.spline if res else None)


def _fixed_n_point(q: ModulusQuery, a: float):
    res = solve_extremal(q.r, q.n, a, q.f, q.g, q.cfg)
    return res


def omega_finite_case(q: ModulusQuery, check: bool = True) -> ModulusResult:
    """``omega(D^k, phi_{r,n,f}(inf))`` as the limit over a of ``|G^(k)_{r,n,f,a}(0)|``.

    a runs over ``a_start * 2^j`` up to ``q.max_a``; both ``phi(a)`` and the
    derivative trace must settle (three relative changes below ``q.tol``).
    The estimated ``phi(inf)`` is reported as ``diagnostics['delta']``.
    """
    if q.n is None:
        raise ParameterError("the a-sweep needs n")
    if check:
        rep = classify_finiteness(q.f, q.g, q.r)
        if rep.classification == CLASS_INFINITE:
            raise PreconditionError("phi(inf) is infinite for these weights; use the n-sweep")
    grid = []
    a = float(q.a_start)
    while a <= q.max_a:
        grid.append(a)
        a *= 2.0
    trace, phis, diag = [], [], {}
    last = None
    batch = max(1, int(q.jobs))
    for i in range(0, len(grid), batch):
        chunk = grid[i:i + batch]
        outs = ordered_map(functools.partial(_fixed_n_point, q), chunk, q.jobs)
        for a, out in zip(chunk, outs):
            if isinstance(out, Exception):
                raise ConvergenceError(f"solve failed at a={a:g}: {out}", history=trace,
                                       best={"a": a, "phi": phis}) from out
            trace.append((a, abs(float(out.spline.unchecked(0.0, q.k)))))
            phis.append(out.deviation)
            last = out
            if _settled(phis, q.tol) and _settled([v for _, v in trace], q.tol):
                diag.update({"phi": phis, "delta": phis[-1], "phi_richardson": _aitken(phis)})
                return _finish(q, trace, True, diag, [t for t, _ in trace], last)
    diag.update({"phi": phis, "delta": phis[-1] if phis else None})
    raise ConvergenceError(f"a-sweep did not settle by a={q.max_a:g}", history=trace,
                           best=_finish(q, trace, False, diag, [t for t, _ in trace], last).to_json())


def modulus_curve(deltas, **query_kw):
    """One n-sweep per delta; rows ``(delta, result-or-exception)`` in input order."""
    rows = []
    for d in deltas:
        q = ModulusQuery(delta=float(d), **query_kw)
        try:
            rows.append((float(d), omega_infinite_case(q)))
        except ConvergenceError as exc:
            rows.append((float(d), exc))
    return rows


# ---------------------------------------------------------------- floor dichotomy

@dataclass
class FloorReport:
    classification: str
    limit: Optional[float]
    bound: Optional[float]
    notion: str
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return {"classification": self.classification, "limit": self.limit, "bound": self.bound,
                "notion": self.notion, "diagnostics": self.diagnostics}


def asymptotic_floor(f: Weight, g: Weight, r: int, T_max: float = 1000.0, grid: int = 10_000,
                     check: bool = True) -> FloorReport:
    """Whether ``phi_{r,n,f}(inf)`` stays bounded away from 0 as n grows.

    FLOOR-POSITIVE iff ``c = lim f(t)/|P_r(t)|`` is finite, in which case
    ``phi_{r,n,f}(inf) >= 1/(2c)`` for every n.  The decision comes from the
    tail classes of f and ``|P_r|``; the sampled ratio on ``[0, T_max]``
    supplies c (its infimum over the last quarter of the representable
    range).  A positive limit of f with decaying ``|P_r|`` gives FLOOR-ZERO.
    """
    if check:
        rep = classify_finiteness(f, g, r)
        if rep.classification != CLASS_FINITE:
            raise PreconditionError(f"floor dichotomy needs the FINITE regime, got {rep.classification}")
    P = bounded_primitives(g, r, float(T_max))
    t = np.linspace(0.0, T_max, grid)
    with np.errstate(divide="ignore", under="ignore"):
        J = P.J(t, r)
        logratio = np.where(J > 1e-290, f.log(t) - np.log(np.maximum(J, 1e-290)), np.nan)
    ok = np.isfinite(logratio)
    horizon = float(t[ok][-1]) if ok.any() else 0.0
    tail = logratio[ok][-max(2, ok.sum() // 4):] if ok.any() else np.array([])
    sampled = float(np.exp(np.min(tail))) if tail.size else None
    diag = {"horizon": horizon, "sampled_liminf": sampled,
            "sampled_last": float(np.exp(tail[-1])) if tail.size else None,
            "f_limit_at_infinity": f.limit_at_infinity}
    pcls = tail_class_of_P(g, r)
    notion = "tail-class comparison; c = inf of sampled f/|P_r| over the last quarter of the horizon"
    if pcls is None or f.tail is None:
        return FloorReport(FLOOR_INCONCLUSIVE, sampled, None, notion + " (no tail descriptor)", diag)
    cmp = f.tail.compare(pcls)
    diag["f_tail"], diag["P_tail"] = f.tail.describe(), pcls.describe()
    if cmp > 0:
        return FloorReport(FLOOR_ZERO, math.inf, None, notion, diag)
    if cmp < 0:
        # f decays faster than |P_r|: the sup-ratio condition fails
        return FloorReport(FLOOR_INCONCLUSIVE, 0.0, None, notion + " (f decays faster than |P_r|)", diag)
    return FloorReport(FLOOR_POSITIVE, sampled, 1.0 / (2.0 * sampled) if sampled else None, notion, diag)


# ---------------------------------------------------------------- classical oracles

@dataclass
class MatorinConstant:
    k: int
    r: int
    value: float
    derivative_k: Fraction
    derivative_r: Fraction
    sharp: bool

    def to_json(self):
        return {"k": self.k, "r": self.r, "value": self.value, "sharp": "SHARP" if self.sharp else "BOUND",
                "T_r^(k)(1)": str(self.derivative_k), "T_r^(r)(1)": str(self.derivative_r)}


def chebyshev_derivative_at_one(r: int, k: int) -> Fraction:
    """``T_r^(k)(1) = prod_{j<k} (r^2 - j^2)/(2j+1)``, exactly."""
    out = Fraction(1)
    for j in range(k):
        out *= Fraction(r * r - j * j, 2 * j + 1)
    return out


def matorin_constant(k: int, r: int, cap: int = 10) -> MatorinConstant:
    """``T_r^(k)(1) / T_r^(r)(1)^(k/r)``; exact for the half-line when r is 2 or 3."""
    if not (1 <= k < r <= cap):
        raise ParameterError(f"need 1 <= k < r <= {cap}, got k={k}, r={r}")
    dk = chebyshev_derivative_at_one(r, k)
    dr = chebyshev_derivative_at_one(r, r)
    value = float(dk) / float(dr) ** (k / r)
    return MatorinConstant(k, r, value, dk, dr, r in (2, 3))


@dataclass
class MordellReport:
    margin: float
    full_margin: float
    lhs: float
    lhs_full: float
    rhs: float
    norm_x: float
    norm_x2: float
    admissible_fraction: float
    worst_t: Optional[float]

    def to_json(self):
        return dict(self.__dict__)


def _as_evaluators(x, a):
    if isinstance(x, PerfectGSpline):
        return (lambda t: x.unchecked(t, 0)), (lambda t: x.unchecked(t, 1)), (lambda t: x.unchecked(t, 2)), \
            x.a, np.asarray(x.knots)
    x0, x1, x2 = x
    if a is None:
        raise ParameterError("sampled functions need the interval end a")
    return x0, x1, x2, float(a), np.array([])


def verify_mordell(x, f: Weight, g: Weight, a: Optional[float] = None, grid: int = 4096) -> MordellReport:
    """Margin of ``sup |x'|/sqrt(fg) <= 2 sqrt(||x||_{C,f} ||x''||_{L,g})`` on ``[0, a]``.

    ``x`` is a PerfectGSpline of order 2 or a triple of callables
    ``(x, x', x'')`` on ``[0, a]``.  On a finite interval the bound at t
    relies on ``[t, t+h]`` with ``h = 2 sqrt(||x|| f(t) / (||x''|| g(t)))``,
    so ``margin`` uses only points with that much room to the right;
    ``full_margin`` uses every point.
    """
    x0, x1, x2, a, knots = _as_evaluators(x, a)
    t = np.unique(np.r_[np.linspace(0.0, a, grid), knots, np.clip(knots - 1e-12 * a, 0, a)])
    ft, gt = f(t), g(t)
    n0 = float(np.max(np.abs(x0(t)) / ft))
    n2 = float(np.max(np.abs(x2(t)) / gt))
    d1 = np.abs(x1(t)) / np.sqrt(ft * gt)
    rhs = 2.0 * math.sqrt(n0 * n2)
    if n2 > 0:
        room = 2.0 * np.sqrt(n0 * ft / (n2 * gt))
        adm = t + room <= a
    else:
        adm = np.zeros_like(t, dtype=bool)
    lhs_full = float(np.max(d1))
    lhs = float(np.max(d1[adm])) if adm.any() else 0.0
    worst = float(t[adm][np.argmax(d1[adm])]) if adm.any() else None
    return MordellReport(rhs - lhs, rhs - lhs_full, lhs, lhs_full, rhs, n0, n2, float(adm.mean()), worst)


FUZZ_WEIGHTS = ("const:1", "exp:0.5", "exp:1", "pow:1", "pow:2", "gauss-paper-f", "gauss-paper-g")


@dataclass
class FuzzReport:
    samples: int
    seed: int
    min_margin: float
    mean_margin: float
    worst: dict

    def to_json(self):
        return dict(self.__dict__)


def random_spline(rng: np.random.Generator, r: int = 2, max_n: int = 5, weights=FUZZ_WEIGHTS):
    """A random order-r perfect g-spline and its weights (Q is the best weighted fit of degree r-1)."""
    g = parse_weight(weights[rng.integers(len(weights))])
    f = parse_weight(weights[rng.integers(len(weights))])
    a = float(rng.uniform(0.5, 3.0) if "gauss" in f.spec else rng.uniform(0.5, 8.0))
    n = int(rng.integers(0, max_n + 1))
    knots = np.sort(rng.uniform(0.0, a, n))
    if n and (np.min(np.diff(np.r_[0.0, knots, a])) < 1e-3 * a):
        knots = a * np.arange(1, n + 1) / (n + 1)
    eps = int(rng.choice([-1, 1]))
    base = PerfectGSpline(r, a, tuple(knots), eps, (0.0,) * r, g)
    try:
        fit = best_weighted_poly(lambda t: base.unchecked(t), f, r - 1, a, tol=1e-10, breakpoints=tuple(knots))
        poly = np.asarray(fit.poly)
    except ConvergenceError:
        # any Q is admissible here; weighted least squares is good enough
        t = np.linspace(0.0, a, 513)
        poly = np.polynomial.polynomial.polyfit(t, base.unchecked(t), r - 1, w=1.0 / f(t))
    return base.with_poly(poly), f, g


def mordell_fuzz(samples: int = 100, seed: int = 7) -> FuzzReport:
    """Mordell margins over seeded random order-2 perfect g-splines."""
    rng = np.random.default_rng(seed)
    margins, worst = [], None
    for i in range(samples):
        s, f, g = random_spline(rng)
        rep = verify_mordell(s, f, g)
        margins.append(rep.margin)
        if worst is None or rep.margin < worst["margin"]:
            worst = {"index": i, "margin": rep.margin, "f": f.spec, "g": g.spec, "spline": s.to_json()}
    return FuzzReport(samples, seed, float(np.min(margins)), float(np.mean(margins)), worst)


# ---------------------------------------------------------------- structural checks

def sign_cascade_at_zero(s: PerfectGSpline, rel: float = 1e-9):
    """Whether ``sgn G^(j)(0) = -sgn G^(j+1)(0)`` for j = 0..r-1 (values below rel*scale skipped)."""
    vals = [float(s.unchecked(0.0, d)) for d in range(s.r + 1)]
    scale = max(abs(v) for v in vals)
    ok = all(v * w < 0 for v, w in zip(vals, vals[1:]) if abs(v) > rel * scale and abs(w) > rel * scale)
    return ok, vals


def derivative_domination(s: PerfectGSpline, samples: int = 100, T: float = 1000.0):
    """Largest ``|G^(j)(t)| - |P_r^(j)(t)|`` over j = 1..r and sampled t in ``[0, a]``."""
    P = bounded_primitives(s.g, s.r, max(T, s.a))
    t = np.linspace(0.0, s.a, samples)
    worst = -math.inf
    for j in range(1, s.r + 1):
        worst = max(worst, float(np.max(np.abs(s.unchecked(t, j)) - P.J(t, s.r - j))))
    return worst


def tail_identity_gap(s: PerfectGSpline, t_lo: float, t_hi: float, samples: int = 100, T: float = 1000.0):
    """Largest ``min_sign |G^(j)(t) - sign*P_r^(j)(t)|`` over j = 1..r on ``[t_lo, t_hi]``."""
    P = bounded_primitives(s.g, s.r, max(T, s.a))
    t = np.linspace(t_lo, t_hi, samples)
    worst = 0.0
    for j in range(1, s.r + 1):
        G = s.unchecked(t, j)
        Pj = P(t, s.r - j) if s.r - j > 0 else s.g(t)
        worst = max(worst, min(float(np.max(np.abs(G - Pj))), float(np.max(np.abs(G + Pj)))))
    return worst
