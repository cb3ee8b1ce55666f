"""Perfect g-splines on ``[0, a]``.

A perfect g-spline of order r with knots ``0 < u_1 < ... < u_n < a`` is

    G(t) = S(t) - Q(t),   S(t) = int_0^t (t-s)^(r-1)/(r-1)! sigma(s) g(s) ds,

where ``sigma = epsilon * (-1)^i`` on the i-th inter-knot interval and Q is a
polynomial of degree r-1.  ``G^(r) = sigma*g`` is taken as the right limit
at a knot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import optimize

from .calculus import gl_kernel_integral, primitive_table
from .errors import DomainError, NotExtremalError, ParameterError
from .weights import Weight, parse_weight

_FACT = [math.factorial(i) for i in range(40)]


class SignedPrimitives:
    """Iterated integrals ``S_1 .. S_r`` of ``sigma*g`` from 0.

    The interval is cut at the quadrature panels of ``g`` and at the knots.
    Values at cut points are marched left to right with exact Taylor shifts,
    so evaluation anywhere costs one local Gauss-Legendre integral.
    """

    def __init__(self, g: Weight, r: int, a: float, knots, epsilon: int):
        self.g, self.r, self.a = g, r, float(a)
        edges = primitive_table(g, 1, self.a).edges
        cuts = np.unique(np.r_[edges, np.asarray(knots, dtype=float)])
        self.cuts = cuts
        nk = np.searchsorted(np.asarray(knots, dtype=float), cuts[:-1], side="right")
        self.sigma = epsilon * (-1.0) ** nk
        lo, hi = cuts[:-1], cuts[1:]
        local = np.stack([gl_kernel_integral(g, lo, hi, m, True) for m in range(1, r + 1)], axis=1)
        S = np.zeros((len(cuts), r + 1))
        d = hi - lo
        for j in range(len(lo)):
            for m in range(1, r + 1):
                acc = self.sigma[j] * local[j, m - 1]
                for i in range(m):
                    acc += S[j, m - i] * d[j] ** i / _FACT[i]
                S[j + 1, m] = acc
        self.S = S

    def segment(self, t):
        return np.clip(np.searchsorted(self.cuts, t, side="right") - 1, 0, len(self.cuts) - 2)

    def __call__(self, t, m: int):
        """``S_m(t)``; ``m = 0`` gives ``sigma(t) g(t)``."""
        t = np.asarray(t, dtype=float)
        j = self.segment(t)
        sig = self.sigma[j]
        if m == 0:
            return sig * self.g(t)
        b = self.cuts[j]
        d = t - b
        out = sig * gl_kernel_integral(self.g, b, t, m, True)
        for i in range(m):
            out = out + self.S[j, m - i] * d**i / _FACT[i]
        return out


@dataclass(frozen=True, eq=False)
class PerfectGSpline:
    """Order ``r`` perfect g-spline on ``[0, a]`` stored as (knots, epsilon, poly).

    ``poly`` holds the monomial coefficients ``c_0 .. c_{r-1}`` of Q.
    """

    r: int
    a: float
    knots: tuple
    epsilon: int
    poly: tuple
    g: Weight
    _engine: Optional[SignedPrimitives] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ParameterError(f"r must be an integer >= 1, got {self.r}")
        if not self.a > 0:
            raise ParameterError("a must be positive")
        if self.epsilon not in (1, -1):
            raise ParameterError(f"epsilon must be +1 or -1, got {self.epsilon}")
        knots = tuple(float(u) for u in self.knots)
        if any(not 0.0 < u < self.a for u in knots):
            raise ParameterError(f"knots must lie strictly inside (0, {self.a:g})")
        if any(k2 <= k1 for k1, k2 in zip(knots, knots[1:])):
            raise ParameterError("knots must be strictly increasing")
        if len(self.poly) != self.r:
            raise ParameterError(f"poly needs {self.r} coefficients, got {len(self.poly)}")
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "poly", tuple(float(c) for c in self.poly))
        if self._engine is None:
            object.__setattr__(self, "_engine", SignedPrimitives(self.g, self.r, self.a, knots, self.epsilon))

    @property
    def n(self):
        return len(self.knots)

    def with_poly(self, poly):
        """Same knots and sign, different correction polynomial (shares the tables)."""
        return PerfectGSpline(self.r, self.a, self.knots, self.epsilon, tuple(poly), self.g, self._engine)

    def flipped(self):
        """``-G``: opposite sign pattern and negated polynomial."""
        return PerfectGSpline(self.r, self.a, self.knots, -self.epsilon, tuple(-c for c in self.poly), self.g)

    def __call__(self, t, d: int = 0):
        return eval_spline(self, d, t)

    def unchecked(self, t, d: int = 0):
        """Evaluation without the domain check (callers guarantee ``t`` in [0, a])."""
        t = np.asarray(t, dtype=float)
        if d == self.r:
            return self._engine(t, 0)
        q = np.asarray(self.poly)
        if d:
            q = npoly.polyder(q, d) if d < len(q) else np.zeros(1)
        return self._engine(t, self.r - d) - npoly.polyval(t, q)

    def sigma(self, t):
        t = np.asarray(t, dtype=float)
        return self._engine.sigma[self._engine.segment(t)]

    def to_json(self):
        return {
            "r": self.r,
            "a": self.a,
            "epsilon": self.epsilon,
            "knots": list(self.knots),
            "poly": list(self.poly),
            "g": self.g.spec,
        }

    @classmethod
    def from_json(cls, doc, g: Optional[Weight] = None):
        g = g if g is not None else parse_weight(doc["g"])
        return cls(int(doc["r"]), float(doc["a"]), tuple(doc["knots"]), int(doc["epsilon"]),
                   tuple(doc["poly"]), g)


def eval_spline(s: PerfectGSpline, d: int, t):
    """``G^(d)(t)`` for ``0 <= d <= r`` and ``t`` in ``[0, a]`` (right limit at knots for d = r)."""
    if not 0 <= d <= s.r:
        raise ParameterError(f"derivative order must be in 0..{s.r}, got {d}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > s.a) or np.any(np.isnan(t)):
        raise DomainError(f"t outside [0, {s.a:g}]")
    out = s.unchecked(t, d)
    return float(out) if out.ndim == 0 else out


def count_sign_changes(s: PerfectGSpline, d: int, resolution: int = 4096, return_roots: bool = False):
    """Sign changes of ``G^(d)`` on ``[0, a]``.

    The grid contains the knots and, for d = r, the knot-interval midpoints.
    Values below ``1e-12`` times the sampled maximum count as zero and carry
    no sign; each bracketing interval is refined by Brent's method when
    ``return_roots`` is set.
    """
    if not 0 <= d <= s.r:
        raise ParameterError(f"derivative order must be in 0..{s.r}, got {d}")
    knots = np.asarray(s.knots)
    ends = np.r_[0.0, knots, s.a]
    t = np.unique(np.r_[np.linspace(0.0, s.a, max(int(resolution), 2)), knots, 0.5 * (ends[:-1] + ends[1:])])
    v = s.unchecked(t, d)
    thresh = 1e-12 * max(float(np.max(np.abs(v))), 1e-300)
    signs = np.where(np.abs(v) > thresh, np.sign(v), 0.0)
    keep = signs != 0
    ts, ss = t[keep], signs[keep]
    change = np.flatnonzero(ss[1:] != ss[:-1])
    if not return_roots:
        return int(change.size)
    roots = []
    for i in change:
        lo, hi = ts[i], ts[i + 1]
        if d == s.r:
            roots.append(float(knots[np.searchsorted(knots, lo, side="right")]) if knots.size else hi)
            continue
        try:
            roots.append(optimize.brentq(lambda x: float(s.unchecked(x, d)), lo, hi, xtol=1e-14 * s.a))
        except ValueError:
            roots.append(0.5 * (lo + hi))
    return int(change.size), roots


@dataclass
class EquioscillationCertificate:
    points: list
    deviation: float
    signs: list
    weighted_residual_extrema_gap: float
    normalized: bool = True

    def to_json(self):
        return {
            "points": list(self.points),
            "signs": list(self.signs),
            "deviation": self.deviation,
            "gap": self.weighted_residual_extrema_gap,
            "normalized": self.normalized,
        }


def expected_signs(r: int, n: int):
    """Sign of ``G(t_i)`` at the i-th alternation point for the normalized spline."""
    return [(-1) ** (i + r + 1) for i in range(1, n + r + 2)]


def check_certificate(s: PerfectGSpline, f: Weight, tol: float = 1e-6) -> EquioscillationCertificate:
    """Verify the alternation conditions of an extremal spline.

    One extremum of ``G/f`` is located per sign run.  The spline passes when
    there are exactly ``n+r+1`` runs, every run reaches the common level
    within ``tol * deviation`` and the last point is ``a``.  ``normalized``
    records whether the signs follow the extremal sign pattern.
    """
    from .equioscillation import weighted_extrema

    ext = weighted_extrema(lambda t: s.unchecked(t), f, s.a, breakpoints=s.knots)
    m = s.n + s.r + 1
    if not ext.points:
        raise NotExtremalError("residual vanishes identically", "count", {"found": 0, "needed": m})
    pts = np.array(ext.points)
    vals = np.array(ext.values)
    dev = float(np.max(np.abs(vals)))
    details = {"points": pts.tolist(), "values": vals.tolist(), "needed": m}
    if len(pts) < m:
        raise NotExtremalError(f"only {len(pts)} alternation points, need {m}", "count", details)
    if len(pts) > m:
        raise NotExtremalError(f"{len(pts)} sign runs, expected exactly {m}", "count", details)
    if pts[-1] != s.a:
        # a itself is an admissible last point when it reaches the level within tol
        va = float(s.unchecked(s.a)) / float(f(s.a))
        if np.sign(va) == np.sign(vals[-1]) and abs(va) >= dev * (1.0 - tol):
            pts[-1], vals[-1] = s.a, va
    gap = float(np.max(dev - np.abs(vals)))
    if gap > tol * dev:
        raise NotExtremalError(f"weighted extrema differ by {gap:.3g} > {tol:g} * {dev:.6g}", "gap", details)
    if abs(pts[-1] - s.a) > 1e-12 * s.a:
        raise NotExtremalError(f"last alternation point {pts[-1]!r} is not a = {s.a!r}", "endpoint", details)
    signs = [int(x) for x in np.sign(vals)]
    if any(x == y for x, y in zip(signs, signs[1:])):
        raise NotExtremalError("signs do not alternate", "alternation", details)
    return EquioscillationCertificate(pts.tolist(), dev, signs, gap, signs == expected_signs(s.r, s.n))
