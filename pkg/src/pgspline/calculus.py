"""Iterated primitives of a weight and the finiteness test on the half-line.

Notation used throughout:

* ``g_k(t)``: the k-th primitive of ``g`` vanishing with its derivatives at 0,
  ``g_0 = g`` and ``g_k(t) = int_0^t g_{k-1}``.
* ``J_k(t) = int_t^inf (s-t)**(k-1)/(k-1)! g(s) ds``: the tail primitive.
  ``A_k = J_{k+1}(0) = int_0^inf s**k g(s) ds / k!``.
* ``P_k = (-1)**k J_k``: the unique k-th primitive of ``g`` decaying at
  infinity, so ``P_k' = P_{k-1}`` and ``P_1 = -A_0 + g_1``.

Every primitive is assembled from Gauss-Legendre panel integrals of ``g``
whose Taylor-shift recurrences only ever add nonnegative terms, which keeps
``J_k`` relatively accurate deep into the tail of the weight.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

from .errors import ImproperIntegralError, ParameterError, PreconditionError, QuadratureBudgetError
from .weights import TailClass, Weight

FINITE = "finite"
DIVERGENT = "divergent"
NOT_EVALUATED = "not-evaluated"
INCONCLUSIVE = "inconclusive"

CLASS_FINITE = "FINITE"
CLASS_INFINITE = "INFINITE"
CLASS_INCONCLUSIVE = "INCONCLUSIVE"

GL_ORDER = 20
_GL_X, _GL_W = leggauss(GL_ORDER)
_TINY = 1e-290
_FACT = [math.factorial(i) for i in range(40)]


def gl_kernel_integral(g, lo, hi, m, forward=True):
    """``int_lo^hi K(s) g(s) ds`` per element, with ``K = (hi-s)^(m-1)/(m-1)!``
    (forward) or ``(s-lo)^(m-1)/(m-1)!`` (backward). ``m = 0`` returns g(hi) / g(lo)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if m == 0:
        return g(hi if forward else lo)
    half = 0.5 * (hi - lo)
    u = (0.5 * (hi + lo))[..., None] + half[..., None] * _GL_X
    gu = g(u)
    if m > 1:
        dist = (hi[..., None] - u) if forward else (u - lo[..., None])
        gu = gu * dist ** (m - 1) / _FACT[m - 1]
    return (gu @ _GL_W) * half


class PrimitiveTable:
    """Iterated primitives of ``g`` on ``[0, T]`` up to a given order.

    The interval is split into panels on which 20-point Gauss-Legendre
    quadrature of ``g`` is converged to ``rtol`` relative accuracy.  Forward
    values ``g_m(b_p)`` and backward values ``int_{b_p}^T (s-b_p)^(m-1)/(m-1)! g``
    are stored at the panel edges; anything in between is one panel integral
    plus a Taylor shift.
    """

    def __init__(self, g: Weight, order: int, T: float, tol: float = 1e-10,
                 node_budget: int = 10**6):
        if order < 0:
            raise ParameterError("order must be >= 0")
        if not T > 0:
            raise ParameterError("T must be positive")
        if not tol > 0:
            raise ParameterError("tol must be positive")
        self.g = g
        self.order = int(order)
        self.T = float(T)
        self.tol = float(tol)
        self.rtol = min(1e-13, tol)
        self.edges, self.nodes_used = _build_panels(g, self.T, self.rtol, node_budget)
        self._build_values()

    def _build_values(self):
        e = self.edges
        P = len(e) - 1
        K = self.order
        w = np.diff(e)
        fwd = np.zeros((P + 1, K + 1))
        bwd = np.zeros((P + 1, K + 1))
        fwd[:, 0] = self.g(e)
        bwd[:, 0] = fwd[:, 0]
        if K >= 1:
            lf = np.stack([gl_kernel_integral(self.g, e[:-1], e[1:], m, True) for m in range(1, K + 1)], axis=1)
            lb = np.stack([gl_kernel_integral(self.g, e[:-1], e[1:], m, False) for m in range(1, K + 1)], axis=1)
            for p in range(P):
                d = w[p]
                for m in range(1, K + 1):
                    acc = lf[p, m - 1]
                    for j in range(m):
                        acc += fwd[p, m - j] * d**j / _FACT[j]
                    fwd[p + 1, m] = acc
            for p in range(P - 1, -1, -1):
                d = w[p]
                for m in range(1, K + 1):
                    acc = lb[p, m - 1]
                    for j in range(m):
                        acc += bwd[p + 1, m - j] * d**j / _FACT[j]
                    bwd[p, m] = acc
        self.fwd = fwd
        self.bwd = bwd

    @property
    def panels(self):
        return len(self.edges) - 1

    def _panel(self, t):
        return np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.edges) - 2)

    def __call__(self, t, k: Optional[int] = None):
        """``g_k(t)`` for ``t`` in ``[0, T]``."""
        k = self.order if k is None else int(k)
        if k > self.order:
            raise ParameterError(f"table built to order {self.order}, asked for {k}")
        t = np.asarray(t, dtype=float)
        if k == 0:
            return self.g(t)
        p = self._panel(t)
        b = self.edges[p]
        d = t - b
        out = gl_kernel_integral(self.g, b, t, k, True)
        for j in range(k):
            out = out + self.fwd[p, k - j] * d**j / _FACT[j]
        return out

    def tail_within(self, t, k: int):
        """``int_t^T (s-t)^(k-1)/(k-1)! g(s) ds`` for ``t`` in ``[0, T]``."""
        t = np.asarray(t, dtype=float)
        if k == 0:
            return self.g(t)
        p = self._panel(t)
        b = self.edges[p + 1]
        d = b - t
        out = gl_kernel_integral(self.g, t, b, k, False)
        for j in range(k):
            out = out + self.bwd[p + 1, k - j] * d**j / _FACT[j]
        return out


def _build_panels(g, T, rtol, budget):
    seeds = [x for x in getattr(g, "breakpoints", ()) if 0.0 < x < T]
    edges0 = np.unique(np.r_[0.0, seeds, T])
    pending_lo, pending_hi = edges0[:-1], edges0[1:]
    accepted = [edges0]
    used = 0
    min_width = 1e-10 * max(1.0, T)
    while pending_lo.size:
        mid = 0.5 * (pending_lo + pending_hi)
        used += 3 * GL_ORDER * pending_lo.size
        if used > budget:
            raise QuadratureBudgetError(
                f"panel refinement of {g!r} on [0, {T:g}] exceeded {budget} nodes",
                achieved=None)
        with np.errstate(under="ignore"):
            whole = gl_kernel_integral(g, pending_lo, pending_hi, 1)
            halves = gl_kernel_integral(g, pending_lo, mid, 1) + gl_kernel_integral(g, mid, pending_hi, 1)
        err = np.abs(whole - halves)
        ok = (err <= rtol * np.abs(halves)) | (np.abs(halves) < _TINY) | ((pending_hi - pending_lo) < min_width)
        bad = ~ok
        accepted.append(mid[bad])
        pending_lo = np.r_[pending_lo[bad], mid[bad]]
        pending_hi = np.r_[mid[bad], pending_hi[bad]]
    return np.unique(np.concatenate(accepted)), used


@functools.lru_cache(maxsize=64)
def _cached_table(g, order, T, tol):
    return PrimitiveTable(g, order, T, tol)


def primitive_table(g: Weight, order: int, T: float, tol: float = 1e-10) -> PrimitiveTable:
    """Shared (memoized) table; weights are immutable, so reuse is safe."""
    return _cached_table(g, int(order), float(T), float(tol))


def build_primitive_table(g: Weight, k: int, T: float, tol: float = 1e-10) -> PrimitiveTable:
    """Table of ``g_0 .. g_k`` on ``[0, T]``; evaluate ``g_k`` with ``table(t)``."""
    return PrimitiveTable(g, k, T, tol)


# ---------------------------------------------------------------- improper integrals

@dataclass
class IntegralValue:
    """An improper integral: a value with error estimate, or a status flag."""

    status: str
    value: Optional[float] = None
    error: Optional[float] = None
    heuristic: bool = False
    horizon: Optional[float] = None
    note: str = ""

    @property
    def finite(self):
        return self.status == FINITE

    def to_json(self):
        return self.value if self.finite else self.status


def improper_integral(fn, start: float = 0.0, certified: Optional[bool] = None,
                      tol: float = 1e-10, max_doublings: int = 200, what: str = "integral") -> IntegralValue:
    """``int_start^inf fn`` by integrating over chunks of doubling width.

    ``certified`` states what the tail descriptor says about integrability:
    ``False`` returns DIVERGENT straight away, ``True`` stops at the first
    chunk whose contribution drops below tolerance, and ``None`` (no
    descriptor) accepts three consecutive small chunks of a decreasing
    integrand, recorded as heuristic.  An undecidable uncertified integral
    raises ImproperIntegralError rather than guessing.
    """
    if certified is False:
        return IntegralValue(DIVERGENT, note=f"{what}: tail descriptor certifies divergence")
    total, err = 0.0, 0.0
    lo, width = float(start), 1.0
    streak = 0
    prev = None
    for _ in range(max_doublings):
        hi = lo + width
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(fn, lo, hi, limit=400, epsabs=tol * 1e-3, epsrel=1e-13)
        total += val
        err += e
        small = abs(val) <= max(tol, 1e-13 * abs(total))
        if small and certified:
            return IntegralValue(FINITE, total, err + abs(val), False, hi)
        if small:
            decreasing = abs(fn(hi)) <= abs(fn(lo)) + 1e-300
            streak = streak + 1 if decreasing else 0
            if streak >= 3:
                return IntegralValue(FINITE, total, err + abs(val), True, hi,
                                     note=f"{what}: accepted heuristically (no tail descriptor)")
        else:
            streak = 0
            if certified is None and prev is not None and abs(val) >= abs(prev) and abs(val) > 1.0:
                raise ImproperIntegralError(
                    f"{what}: weight has no declared tail and the integrand does not decay "
                    f"(chunk [{lo:g}, {hi:g}] contributes {val:g}); refusing to extrapolate")
        prev = val
        lo, width = hi, 2.0 * width
    if certified:
        return IntegralValue(FINITE, total, err + abs(prev or 0.0), False, lo,
                             note=f"{what}: doubling budget exhausted before chunk fell below tol")
    raise ImproperIntegralError(f"{what}: no convergence within {max_doublings} doublings and no tail descriptor")


def compute_A(g: Weight, r: int, tol: float = 1e-10) -> list:
    """``A_0 .. A_{r-1}`` as :class:`IntegralValue` entries.

    ``A_k`` is evaluated in the moment form ``int_0^inf t^k g(t) dt / k!``,
    which equals the tail-primitive integral ``int_0^inf J_k`` by Tonelli
    (the integrand of the defining recursion is exactly ``J_k >= 0``).
    After the first divergent entry the rest are NOT-EVALUATED.
    """
    if r < 1:
        raise ParameterError("r must be >= 1")
    out = []
    for k in range(r):
        if out and not out[-1].finite:
            out.append(IntegralValue(NOT_EVALUATED, note=f"A_{k} skipped after divergence"))
            continue
        certified = g.tail.integrable(k) if g.tail is not None else None
        fk = _FACT[k]
        out.append(improper_integral(lambda t, k=k, fk=fk: t**k * float(g(t)) / fk, 0.0, certified, tol,
                                     what=f"A_{k}"))
    return out


def eq6_integrand(table: PrimitiveTable, A, k: int, t):
    """Integrand of the ``A_k`` recursion, ``sum (-1)^(k-s-1) A_s t^(k-s-1)/(k-s-1)! + (-1)^k g_k(t)``.

    Equal to ``J_k(t)``; the explicit form cancels badly for large t and is
    kept for cross-checks at moderate t.
    """
    t = np.asarray(t, dtype=float)
    vals = _finite_values(A, k)
    out = (-1) ** k * table(t, k)
    for s in range(k):
        e = k - s - 1
        out = out + (-1) ** e * vals[s] * t**e / _FACT[e]
    return out


def _finite_values(A, k):
    vals = []
    for s in range(k):
        a = A[s]
        v = a.value if isinstance(a, IntegralValue) else a
        if isinstance(a, IntegralValue) and not a.finite or v is None:
            raise PreconditionError(f"A_{s} is not finite; P_{k} is undefined")
        vals.append(float(v))
    return vals


class BoundedPrimitives:
    """``P_1 .. P_order`` of ``g`` (the primitives decaying at infinity).

    A table on ``[0, T]`` handles ``int_t^T``; the remainder beyond ``T`` is a
    Taylor shift of the improper tails ``J_m(T)``.
    """

    def __init__(self, g: Weight, order: int, T: float = 1000.0, tol: float = 1e-10):
        self.g = g
        self.order = order
        self.T = float(T)
        self.tol = tol
        self.table = primitive_table(g, order, self.T)
        certified = (lambda m: g.tail.integrable(m - 1)) if g.tail is not None else (lambda m: None)
        self.tails = []
        for m in range(1, order + 1):
            fm = _FACT[m - 1]
            T0 = self.T
            iv = improper_integral(lambda s, m=m, fm=fm, T0=T0: (s - T0) ** (m - 1) / fm * float(g(s)),
                                   self.T, certified(m), 0.0, what=f"J_{m}({self.T:g})")
            if not iv.finite:
                raise PreconditionError(f"tail integral J_{m} diverges; P_{m} is undefined")
            self.tails.append(iv.value)

    def J(self, t, k: int):
        """Tail primitive ``J_k(t) = |P_k(t)|``."""
        t = np.asarray(t, dtype=float)
        if k == 0:
            return self.g(t)
        inside = np.minimum(t, self.T)
        out = self.table.tail_within(inside, k)
        d = self.T - inside
        for j in range(k):
            out = out + self.tails[k - 1 - j] * d**j / _FACT[j]
        beyond = t > self.T
        if np.any(beyond):
            out = np.array(out, dtype=float, copy=True)
            flat = out.reshape(-1)
            for i in np.flatnonzero(beyond.reshape(-1)):
                flat[i] = _direct_J(self.g, float(t.reshape(-1)[i]), k, self.tol)
        return out

    def __call__(self, t, k: int):
        """``P_k(t) = (-1)^k J_k(t)``."""
        return (-1) ** k * self.J(t, k)


def _direct_J(g, t, k, tol):
    certified = g.tail.integrable(k - 1) if g.tail is not None else None
    fk = _FACT[k - 1]
    iv = improper_integral(lambda s: (s - t) ** (k - 1) / fk * float(g(s)), t, certified, 0.0,
                           what=f"J_{k}({t:g})")
    return iv.value


@functools.lru_cache(maxsize=32)
def bounded_primitives(g: Weight, order: int, T: float = 1000.0) -> BoundedPrimitives:
    return BoundedPrimitives(g, order, T)


def eval_P(g: Weight, A, k: int, t):
    """``P_k(t)``, the k-th primitive of ``g`` that decays at infinity.

    ``A`` must hold finite ``A_0 .. A_{k-1}``; they fix the polynomial part
    of ``P_k - g_k`` and are checked here.  Values come from the tail form
    ``(-1)^k int_t^inf (s-t)^(k-1)/(k-1)! g(s) ds`` which does not cancel.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    _finite_values(A, k)
    return bounded_primitives(g, k)(t, k)


# ---------------------------------------------------------------- sup ratio

@dataclass
class SupRatio:
    status: str
    value: Optional[float] = None
    argmax: Optional[float] = None
    horizon: Optional[float] = None
    heuristic: bool = False
    note: str = ""

    def to_json(self):
        return self.value if self.status == FINITE else self.status


def tail_class_of_P(g: Weight, r: int) -> Optional[TailClass]:
    """Asymptotic class of ``|P_r|`` derived from the tail class of ``g``."""
    cls = g.tail
    for _ in range(r):
        if cls is None:
            return None
        cls = cls.tail_integral()
    return cls


def sup_ratio(P: BoundedPrimitives, r: int, f: Weight, T_max: float = 1000.0,
              grid: int = 10_000) -> SupRatio:
    """``K_r = sup_{t >= 0} |P_r(t)| / f(t)``.

    Grid search over ``[0, T_max]`` (in log space, so underflowing weights
    are fine) with golden-section refinement around the best grid point.
    Beyond the grid the decision rests on the tail classes of ``|P_r|`` and
    ``f``: DIVERGENT when ``|P_r|`` decays slower, INCONCLUSIVE when either
    class is unknown and the sampled ratio is still rising at the horizon.
    """
    pcls = tail_class_of_P(P.g, r)
    if pcls is not None and f.tail is not None and pcls.compare(f.tail) > 0:
        return SupRatio(DIVERGENT, horizon=T_max,
                        note=f"|P_{r}| ~ {pcls.describe()} decays slower than f ~ {f.tail.describe()}")

    t = np.linspace(0.0, T_max, grid)
    with np.errstate(divide="ignore", under="ignore"):
        J = P.J(t, r)
        logratio = np.where(J > _TINY, np.log(np.maximum(J, _TINY)) - f.log(t), -np.inf)
    usable = np.isfinite(logratio)
    if not usable.any():
        return SupRatio(INCONCLUSIVE, horizon=T_max, note="ratio not representable on the grid")
    i = int(np.argmax(np.where(usable, logratio, -np.inf)))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, grid - 1)]

    def neg(x):
        return -(math.log(float(P.J(x, r))) - float(f.log(x)))

    best_t, best = t[i], logratio[i]
    if hi > lo:
        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, hi)})
        if -res.fun > best:
            best_t, best = float(res.x), -res.fun
    value = math.exp(best)
    last = int(np.flatnonzero(usable)[-1])
    horizon = float(t[last])

    if pcls is not None and f.tail is not None:
        return SupRatio(FINITE, value, float(best_t), horizon,
                        note=f"tail classes: |P_{r}| ~ {pcls.describe()}, f ~ {f.tail.describe()}")
    # no certificate: accept only if the ratio is not climbing at the horizon
    window = logratio[usable][-max(10, grid // 10):]
    rising = window[-1] > window[0] + 1e-9 and window[-1] >= best - 1e-9
    if rising:
        return SupRatio(INCONCLUSIVE, value, float(best_t), horizon, True,
                        note="ratio still increasing at the horizon and no tail descriptor")
    return SupRatio(FINITE, value, float(best_t), horizon, True,
                    note="no tail descriptor; sup taken over the sampled horizon")


# ---------------------------------------------------------------- classification

@dataclass
class FinitenessReport:
    r: int
    A: list
    K_r: Optional[SupRatio]
    classification: str
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "r": self.r,
            "A": [a.to_json() for a in self.A],
            "K_r": self.K_r.to_json() if self.K_r is not None else NOT_EVALUATED,
            "classification": self.classification,
            "diagnostics": self.diagnostics,
        }


def classify_finiteness(f: Weight, g: Weight, r: int, tol: float = 1e-10,
                        T_max: float = 1000.0, grid: int = 10_000) -> FinitenessReport:
    """Decide whether the extremal deviation stays bounded as the interval grows.

    FINITE iff every ``A_k`` (k < r) is finite and ``K_r`` is finite.  The
    answer does not depend on the number of knots, so no ``n`` is taken.
    """
    A = compute_A(g, r, tol)
    diag = {
        "f_limit_at_infinity": f.limit_at_infinity,
        "f_tail": f.tail_descriptor,
        "g_tail": g.tail_descriptor,
        "A_errors": [a.error for a in A],
        "A_horizons": [a.horizon for a in A],
        "A_heuristic": [a.heuristic for a in A],
        "notes": [a.note for a in A if a.note],
    }
    if not all(a.finite for a in A):
        return FinitenessReport(r, A, None, CLASS_INFINITE, diag)
    P = bounded_primitives(g, r, float(T_max))
    K = sup_ratio(P, r, f, T_max, grid)
    diag["K_horizon"] = K.horizon
    diag["K_argmax"] = K.argmax
    diag["K_heuristic"] = K.heuristic
    if K.note:
        diag["notes"].append(K.note)
    cls = {FINITE: CLASS_FINITE, DIVERGENT: CLASS_INFINITE}.get(K.status, CLASS_INCONCLUSIVE)
    return FinitenessReport(r, A, K, cls, diag)
