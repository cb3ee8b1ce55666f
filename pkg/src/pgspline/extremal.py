"""Extremal perfect g-splines: the spline of order r with at most n knots whose
weighted uniform norm on ``[0, a]`` is smallest.

For a knot vector ``xi`` let ``S_xi`` be the r-fold integral of ``sigma*g``
and ``Q_xi`` its best weighted approximation of degree ``n+r-1``.  The knots
of the extremal spline are the zero of the map ``xi -> (c_r, ..., c_{n+r-1})``
(the Chebyshev coefficients of ``Q_xi`` above degree r-1); the extremal spline
is then ``S_xi`` minus the low part of ``Q_xi``.  The zero is found with a
damped Newton iteration on a finite-difference Jacobian.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import optimize

from .calculus import primitive_table
from .equioscillation import base_grid, best_weighted_poly, exchange_reference, extrema_on_grid, to_monomial
from .errors import (ConvergenceError, DegenerateKnotsError, DeltaRangeError, NotExtremalError,
                     ParameterError, SolverFailure)
from .gspline import EquioscillationCertificate, PerfectGSpline, SignedPrimitives, check_certificate
from .parallel import ordered_map
from .weights import Weight

log = logging.getLogger(__name__)

KNOT_GAP = 1e-8
INIT_POLICIES = ("equidistributed", "mass-quantile", "uniform")


@dataclass
class ExtremalSolveConfig:
    init: str = "equidistributed"
    outer_tol: float = 1e-10
    max_outer: int = 60
    fd_step: float = 1e-7
    inner_tol: float = 1e-13
    cert_tol: float = 1e-6
    max_n: int = 24
    strict: bool = False
    init_knots: Optional[tuple] = None

    def __post_init__(self):
        if self.init not in INIT_POLICIES:
            raise ParameterError(f"unknown knot initialization {self.init!r}")
        for name in ("outer_tol", "fd_step", "inner_tol", "cert_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.max_outer < 1:
            raise ParameterError("max_outer must be >= 1")

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return ExtremalSolveConfig(**d)


@dataclass
class ExtremalResult:
    spline: PerfectGSpline
    certificate: EquioscillationCertificate
    diagnostics: dict = field(default_factory=dict)

    @property
    def deviation(self):
        return self.certificate.deviation

    def __iter__(self):
        yield self.spline
        yield self.certificate

    def to_json(self):
        doc = self.spline.to_json()
        doc["certificate"] = self.certificate.to_json()
        doc["diagnostics"] = self.diagnostics
        return doc


@dataclass
class PhiPoint:
    r: int
    n: int
    a: float
    phi: float
    certificate: EquioscillationCertificate
    diagnostics: dict = field(default_factory=dict)
    spline: Optional[PerfectGSpline] = None


def _check_args(r, n, a, cfg):
    if int(r) != r or r < 1:
        raise ParameterError(f"r must be an integer >= 1, got {r}")
    if int(n) != n or n < 0:
        raise ParameterError(f"n must be an integer >= 0, got {n}")
    if not a > 0:
        raise ParameterError("a must be positive")
    if n > cfg.max_n:
        raise ParameterError(f"n = {n} exceeds the cap max_n = {cfg.max_n}")


def initial_knots(g: Weight, n: int, a: float, policy: str = "equidistributed", f: Optional[Weight] = None,
                  r: int = 1):
    """Starting knots for the outer iteration.

    ``mass-quantile`` splits the mass of g on [0, a] into n+1 equal parts;
    ``equidistributed`` does the same for the density ``(g/f)^(1/r)``, the
    local knot density of a perfect spline at fixed weighted deviation;
    ``uniform`` spaces the knots evenly.
    """
    if n == 0:
        return np.array([])
    if policy == "uniform":
        return a * np.arange(1, n + 1) / (n + 1)
    if policy == "mass-quantile" or f is None:
        t = np.linspace(0.0, a, 8193)
        mass = primitive_table(g, 1, a)(t, 1)
    else:
        t, mass = _density_coordinate(f, g, r, a)
    return np.interp(mass[-1] * np.arange(1, n + 1) / (n + 1), mass, t)


class _ResidualMap:
    """``xi -> high Chebyshev coefficients`` of the best approximation of ``S_xi``."""

    def __init__(self, r, n, a, f, g, cfg):
        self.r, self.n, self.a, self.f, self.g, self.cfg = r, n, a, f, g, cfg
        self.evaluations = 0

    def __call__(self, knots, reference=None):
        self.evaluations += 1
        eng = SignedPrimitives(self.g, self.r, self.a, knots, 1)
        res = best_weighted_poly(lambda t: eng(t, self.r), self.f, self.n + self.r - 1, self.a,
                                 tol=self.cfg.inner_tol, reference=reference, breakpoints=tuple(knots))
        c = np.asarray(res.cheb_coeffs)
        return c[self.r:], res, eng


def _admissible(knots, a):
    gaps = np.diff(np.r_[0.0, knots, a])
    return np.all(gaps > KNOT_GAP * a)


def _max_fraction(knots, step, a, keep=0.5):
    """Largest alpha in (0, 1] keeping every knot gap above ``keep`` of its current size."""
    x = np.r_[0.0, knots, a]
    dx = np.r_[0.0, step, 0.0]
    gaps, dg = np.diff(x), np.diff(dx)
    shrink = dg < 0
    if not shrink.any():
        return 1.0
    return float(min(1.0, np.min((1.0 - keep) * gaps[shrink] / -dg[shrink])))


def rounding_floor(res):
    """Attainable size of the high coefficients given the inner solve's rounding noise."""
    c = np.asarray(res.cheb_coeffs)
    return 1e-12 * len(c) * max(float(np.max(np.abs(c))), 1e-300)


def _newton(F, knots, a, cfg, scale_fn):
    """Damped Newton on the knot residual map with a forward-difference Jacobian."""
    n = len(knots)
    c, res, eng = F(knots)
    history = [float(np.sum(np.abs(c)))]
    best = (history[0], knots, c, res, eng)
    for it in range(cfg.max_outer):
        target = cfg.outer_tol * scale_fn(res)
        floor = rounding_floor(res)
        norm1 = float(np.sum(np.abs(c)))
        if norm1 <= max(target, floor):
            status = "converged" if norm1 <= target else "rounding-floor"
            return knots, c, res, eng, {"outer_iterations": it, "residual_l1": norm1, "target": target,
                                        "floor": floor, "history": history, "status": status}
        h = cfg.fd_step * a
        J = np.empty((len(c), n))
        for j in range(n):
            kp = knots.copy()
            # step away from the nearer neighbour so the perturbed knots stay ordered
            right = (kp[j + 1] if j + 1 < n else a) - kp[j]
            left = kp[j] - (kp[j - 1] if j > 0 else 0.0)
            hj = h if right >= left else -h
            kp[j] += hj
            cj, _, _ = F(kp, res.reference)
            J[:, j] = (cj - c) / hj
        step = -np.linalg.lstsq(J, c, rcond=None)[0]
        alpha = _max_fraction(knots, step, a)
        accepted = False
        for _ in range(21):
            trial = knots + alpha * step
            if _admissible(trial, a):
                ct, rt, et = F(trial, res.reference)
                if np.linalg.norm(ct) < np.linalg.norm(c):
                    knots, c, res, eng = trial, ct, rt, et
                    accepted = True
                    break
            alpha *= 0.5
        history.append(float(np.sum(np.abs(c))))
        if history[-1] < best[0]:
            best = (history[-1], knots, c, res, eng)
        if not accepted:
            raise SolverFailure(f"line search failed at outer iteration {it + 1}; residual {history[-1]:.3g}",
                                history=history, best={"knots": best[1].tolist(), "residual": best[0]})
        gaps = np.diff(np.r_[0.0, knots, a])
        if np.min(gaps) < KNOT_GAP * a:
            raise DegenerateKnotsError("knots collided; try a smaller n or a larger a", history=history,
                                       best={"knots": knots.tolist(), "residual": history[-1]})
    norm1 = float(np.sum(np.abs(c)))
    if norm1 <= cfg.outer_tol * scale_fn(res):
        return knots, c, res, eng, {"outer_iterations": cfg.max_outer, "residual_l1": norm1,
                                    "history": history, "status": "converged"}
    raise SolverFailure(f"no convergence in {cfg.max_outer} outer iterations; residual {norm1:.3g}",
                        history=history, best={"knots": best[1].tolist(), "residual": best[0]})


def _density_coordinate(f, g, r, a, size=8193):
    t = np.linspace(0.0, a, size)
    dens = np.exp((g.log(t) - f.log(t)) / r)
    return t, np.r_[0.0, np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))]


def _density_reference(f, g, r, a, count):
    """Chebyshev extrema placed in the coordinate ``int (g/f)^(1/r)``; the last point is a."""
    t, tau = _density_coordinate(f, g, r, a)
    ref = np.interp(tau[-1] * 0.5 * (1.0 - np.cos(np.pi * np.arange(count) / (count - 1))), tau, t)
    ref[0], ref[-1] = 0.0, a
    return ref


def equioscillation_knots(r: int, n: int, a: float, f: Weight, g: Weight, knots, tol: float = 1e-13,
                         max_exchanges: int = 80):
    """Knots of the extremal spline by a Remez-type iteration on the spline itself.

    With a fixed reference ``t_1 < ... < t_{n+r+1}`` the conditions
    ``G(t_i) = s_i E f(t_i)`` are n+r+1 equations in the knots, the r
    coefficients of Q and the level E; they are solved by Newton with the
    exact knot derivative ``dS(t)/du_j = 2 sigma_{j-1} (t-u_j)_+^(r-1)/(r-1)! g(u_j)``.
    The reference then moves to the extrema of ``G/f``.  Used to warm-start
    the residual-map iteration, whose Newton basin shrinks quickly with n.
    Requires r >= 2 (for r = 1 the extrema sit on the knots).
    """
    if r < 2 or n == 0:
        raise ParameterError("direct equioscillation iteration needs r >= 2 and n >= 1")
    N = n + r + 1
    knots = np.array(knots, dtype=float)
    eng = SignedPrimitives(g, r, a, knots, 1)
    ref = _density_reference(f, g, r, a, N)
    sgn0 = 1.0
    fact = math.factorial(r - 1)
    history = []

    def residual(kn, q, E, ref, s):
        e = SignedPrimitives(g, r, a, kn, 1)
        return e(ref, r) - cheb.chebval(2 * ref / a - 1, q) - s * E * f(ref), e

    q = None
    E = None
    for it in range(max_exchanges):
        s = sgn0 * (-1.0) ** np.arange(N)
        V = cheb.chebvander(2 * ref / a - 1, r - 1)
        fr = f(ref)
        if q is None:
            sol = np.linalg.lstsq(np.column_stack([V, s * fr]), eng(ref, r), rcond=None)[0]
            q, E = sol[:r], sol[r]
        R, eng = residual(knots, q, E, ref, s)
        for _ in range(40):
            scale = 1e-15 * (np.max(np.abs(eng(ref, r))) + 1.0)
            if np.linalg.norm(R, np.inf) <= scale:
                break
            sig_before = (-1.0) ** np.arange(n)
            D = 2.0 * sig_before * np.maximum(ref[:, None] - knots[None, :], 0.0) ** (r - 1) / fact * g(knots)
            J = np.column_stack([D, -V, -s * fr])
            try:
                dx = np.linalg.solve(J, -R)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(J, -R, rcond=None)[0]
            alpha = _max_fraction(knots, dx[:n], a)
            for _ in range(30):
                kn = knots + alpha * dx[:n]
                if _admissible(kn, a):
                    Rt, et = residual(kn, q + alpha * dx[n:n + r], E + alpha * dx[-1], ref, s)
                    if np.linalg.norm(Rt) < np.linalg.norm(R):
                        knots, q, E = kn, q + alpha * dx[n:n + r], E + alpha * dx[-1]
                        R, eng = Rt, et
                        break
                alpha *= 0.5
            else:
                break
        t = base_grid(a, tuple(knots))

        def weighted(z, q=q, eng=eng):
            return (eng(z, r) - cheb.chebval(2 * z / a - 1, q)) / f(z)

        pts, vals = extrema_on_grid(t, weighted(t), weighted, a)
        if len(pts) < N:
            raise ConvergenceError(f"spline has only {len(pts)} sign runs, need {N}", history=history)
        dev = float(np.max(np.abs(vals)))
        history.append(dev)
        stalled = len(history) > 4 and min(history[-3:]) >= min(history[:-3])
        if len(pts) == N and (dev - abs(E) <= tol * dev or (stalled and dev - abs(E) <= 1e-9 * dev)):
            return knots, {"exchanges": it + 1, "history": history}
        new = exchange_reference(ref, np.sign(E) * sgn0, pts, vals, N - 2)
        sgn0 = float(np.sign(weighted(np.array([new[0]]))[0])) or 1.0
        E = abs(E)
        ref = np.asarray(new, dtype=float)
    raise ConvergenceError("spline exchange did not level", history=history)


def solve_extremal(r: int, n: int, a: float, f: Weight, g: Weight,
                   cfg: Optional[ExtremalSolveConfig] = None) -> ExtremalResult:
    """Extremal perfect g-spline of order r with n knots on ``[0, a]`` and its certificate.

    The returned spline is normalized so that its weighted values at the
    alternation points ``t_1 < ... < t_{n+r+1} = a`` have signs
    ``(-1)^(i+r+1)``.  Raises SolverFailure / DegenerateKnotsError when the
    knot iteration fails and NotExtremalError when the certificate fails.
    """
    cfg = cfg or ExtremalSolveConfig()
    _check_args(r, n, a, cfg)
    a = float(a)
    F = _ResidualMap(r, n, a, f, g, cfg)
    fa = float(f(a))

    def scale(res):
        return max(res.deviation * fa, 1e-300)

    if cfg.init_knots is not None:
        knots = np.asarray(cfg.init_knots, dtype=float)
        if len(knots) != n:
            raise ParameterError(f"init_knots has {len(knots)} entries, need {n}")
    else:
        knots = initial_knots(g, n, a, cfg.init, f, r)
    if not _admissible(knots, a):
        raise DegenerateKnotsError("initial knots are degenerate", history=[])

    if n == 0:
        c, res, eng = F(knots)
        info = {"outer_iterations": 0, "residual_l1": 0.0, "history": [], "status": "converged"}
    else:
        starts = [("given" if cfg.init_knots is not None else cfg.init, knots)]
        starts += [(p, initial_knots(g, n, a, p, f, r)) for p in INIT_POLICIES if p != starts[0][0]]
        failures = []
        if r >= 2:
            try:
                direct, dinfo = equioscillation_knots(r, n, a, f, g, knots)
                starts.insert(0, ("equioscillation", direct))
            except (ConvergenceError, np.linalg.LinAlgError) as exc:
                failures.append(("equioscillation", exc))
        for policy, k0 in starts:
            try:
                knots, c, res, eng, info = _newton(F, k0, a, cfg, scale)
                info["init"] = policy
                break
            except (SolverFailure, ConvergenceError) as exc:
                failures.append((policy, exc))
                log.info("outer solve from %s start failed: %s", policy, exc)
        else:
            exc = failures[-1][1]
            if isinstance(exc, DegenerateKnotsError):
                raise exc
            raise SolverFailure("outer iteration failed from every start: "
                                + "; ".join(f"{p}: {e}" for p, e in failures),
                                history=getattr(exc, "history", []), best=getattr(exc, "best", None))
        if failures:
            info["failed_starts"] = [p for p, _ in failures]

    low = to_monomial(np.asarray(res.cheb_coeffs)[:r], a)
    spline = PerfectGSpline(r, a, tuple(knots), 1, tuple(low), g, eng)
    cert = check_certificate(spline, f, cfg.cert_tol)
    if not cert.normalized:
        spline = spline.flipped()
        cert = check_certificate(spline, f, cfg.cert_tol)
    diag = dict(info)
    diag.update({"inner_iterations": res.iterations, "residual_evaluations": F.evaluations,
                 "levelled_deviation": res.levelled})
    if cfg.strict and n > 0:
        diag["uniqueness"] = _uniqueness_probe(r, n, a, f, g, cfg, spline, cert)
    return ExtremalResult(spline, cert, diag)


def _uniqueness_probe(r, n, a, f, g, cfg, spline, cert):
    """Re-solve from a second initialization and require the same spline."""
    other = "uniform" if cfg.init != "uniform" else "mass-quantile"
    start = initial_knots(g, n, a, other, f, r)
    if cfg.init_knots is None and np.allclose(start, spline.knots, rtol=0, atol=1e-3 * a):
        # both policies coincide (constant g): shift the start by a quarter gap
        gaps = np.diff(np.r_[0.0, start, a])
        start = start + 0.25 * gaps[:-1] * (-1.0) ** np.arange(n)
    alt = solve_extremal(r, n, a, f, g, cfg.replace(strict=False, init_knots=tuple(start)))
    dd = abs(alt.deviation - cert.deviation) / cert.deviation
    dk = float(np.max(np.abs(np.subtract(alt.spline.knots, spline.knots)))) if n else 0.0
    if dd > 1e-6 or dk > 1e-4:
        raise SolverFailure(f"two initializations disagree (deviation {dd:.2e}, knots {dk:.2e})",
                            history=[], best={"knots": list(spline.knots)})
    return {"deviation_diff": dd, "knot_diff": dk}


def phi(r: int, n: int, a: float, f: Weight, g: Weight,
        cfg: Optional[ExtremalSolveConfig] = None) -> PhiPoint:
    """``phi_{r,n,f}(a)``, the weighted norm of the extremal spline on ``[0, a]``."""
    res = solve_extremal(r, n, a, f, g, cfg)
    return PhiPoint(r, n, float(a), res.deviation, res.certificate, res.diagnostics, res.spline)


def _phi_point(args):
    r, n, a, f, g, cfg = args
    return phi(r, n, a, f, g, cfg)


def phi_curve(r: int, n: int, grid, f: Weight, g: Weight, cfg: Optional[ExtremalSolveConfig] = None,
              jobs: int = 1):
    """Rows ``(a, phi or None, status)`` sorted by a; a failed solve leaves a flagged gap row."""
    cfg = cfg or ExtremalSolveConfig()
    grid = sorted(float(a) for a in grid)
    for a in grid:
        if not a > 0:
            raise ParameterError("a must be positive")
    outs = ordered_map(_phi_point, [(r, n, a, f, g, cfg) for a in grid], jobs)
    rows = []
    for a, out in zip(grid, outs):
        if isinstance(out, ParameterError):
            raise out
        if isinstance(out, Exception):
            rows.append((a, None, f"failed: {type(out).__name__}"))
        else:
            rows.append((a, out.phi, "ok"))
    return rows


def solve_a_for_delta(r: int, n: int, delta: float, f: Weight, g: Weight,
                      cfg: Optional[ExtremalSolveConfig] = None, tol: float = 1e-10,
                      a0: Optional[float] = None, max_a: float = 2.0**16, return_solution: bool = False):
    """Interval length ``a`` with ``phi_{r,n,f}(a) = delta``.

    Brackets by doubling/halving from ``a0`` and refines with Brent's method
    (phi increases with a).  Knots are carried between solves by scaling.
    Raises DeltaRangeError when delta is not reached before ``max_a``.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    cfg = cfg or ExtremalSolveConfig()
    _check_args(r, n, 1.0, cfg)
    cache = {}
    state = {"knots": None, "a": None}

    def solve(a):
        if a in cache:
            return cache[a]
        c = cfg
        if state["knots"] is not None and n > 0:
            c = cfg.replace(init_knots=tuple(np.asarray(state["knots"]) * (a / state["a"])))
        try:
            res = solve_extremal(r, n, a, f, g, c)
        except (ConvergenceError, NotExtremalError):
            if c is cfg:
                raise
            res = solve_extremal(r, n, a, f, g, cfg)
        state["knots"], state["a"] = np.asarray(res.spline.knots), a
        cache[a] = res
        return res

    a = float(a0) if a0 is not None else _guess_a(r, n, delta, g)
    lo = hi = None
    v = solve(a).deviation
    if v < delta:
        lo = a
        while True:
            a *= 2.0
            if a > max_a:
                raise DeltaRangeError(
                    f"phi_(r={r},n={n}) stays below delta={delta:g} up to a={max_a:g} "
                    f"(last value {cache[lo].deviation:.6g}); if the problem is in the FINITE "
                    f"regime delta exceeds phi(inf)")
            v = solve(a).deviation
            if v >= delta:
                hi = a
                break
            lo = a
    else:
        hi = a
        while True:
            a *= 0.5
            v = solve(a).deviation
            if v <= delta:
                lo = a
                break
            hi = a
            if a < 1e-12:
                raise DeltaRangeError(f"delta={delta:g} below phi on every tested interval")
    if cache[lo].deviation == delta:
        best = lo
    elif cache[hi].deviation == delta:
        best = hi
    else:
        best = optimize.brentq(lambda x: solve(x).deviation - delta, lo, hi, xtol=1e-14 * hi,
                               rtol=max(4 * np.finfo(float).eps, tol * 1e-2), maxiter=200)
    res = solve(best)
    if abs(res.deviation - delta) > tol * delta * 10:
        log.warning("solve_a_for_delta: |phi(a) - delta| = %g", abs(res.deviation - delta))
    return (best, res) if return_solution else best


def _guess_a(r, n, delta, g):
    """Starting interval length: the unweighted scale law ``(delta r! 2^(2r-1))^(1/r)`` times n+1."""
    base = (delta * math.factorial(r) * 2.0 ** (2 * r - 1) / float(g(0.0))) ** (1.0 / r)
    return base * (n + 1)
