"""Weighted best uniform polynomial approximation by Remez exchange.

Finds the polynomial Q of degree <= m minimizing ``max |h - Q| / f`` on
``[0, a]``.  Polynomials are handled in the Chebyshev basis of ``[0, a]``
and converted to monomial coefficients only on output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import Chebyshev

from .errors import ConvergenceError, ParameterError
from .weights import Weight

DEFAULT_GRID = 2048
_ZOOM_POINTS = 33
_ZOOM_ROUNDS = 7
# levelling accepted when the exchange stalls at rounding noise within this gap
FLOOR_RTOL = 1e-9
# a run touching an endpoint takes the endpoint when it is this close to the run maximum
ENDPOINT_RTOL = 1e-9


@dataclass
class Extrema:
    points: list
    values: list
    shortage: bool = False
    message: str = ""


@dataclass
class WeightedApproxResult:
    poly: list
    deviation: float
    alternation_points: list
    iterations: int
    residual_history: list
    cheb_coeffs: list = field(default_factory=list)
    levelled: float = 0.0
    sandwich: list = field(default_factory=list)
    reference: list = field(default_factory=list)
    signs: list = field(default_factory=list)
    rounding_floor: bool = False


def base_grid(a: float, breakpoints=(), size: int = DEFAULT_GRID, per_segment: int = 16):
    """Uniform grid plus Chebyshev-Lobatto points on every segment between breakpoints."""
    bps = np.asarray([b for b in breakpoints if 0.0 < b < a], dtype=float)
    ends = np.r_[0.0, bps, a]
    k = np.arange(per_segment + 1)
    lob = 0.5 * (1.0 - np.cos(np.pi * k / per_segment))
    seg = (ends[:-1, None] + np.diff(ends)[:, None] * lob).ravel()
    return np.unique(np.r_[np.linspace(0.0, a, size), seg, ends])


def _runs(values, floor):
    """Start/stop indices of maximal runs of constant sign, ignoring near-zero entries."""
    s = np.where(np.abs(values) > floor, np.sign(values), 0.0)
    idx = np.flatnonzero(s)
    if idx.size == 0:
        return []
    ss = s[idx]
    cut = np.flatnonzero(ss[1:] != ss[:-1]) + 1
    bounds = np.r_[0, cut, idx.size]
    return [(idx[b0], idx[b1 - 1]) for b0, b1 in zip(bounds[:-1], bounds[1:])]


def _zoom(weighted, a, bt, bv, sgn, lo, hi, rounds=_ZOOM_ROUNDS):
    """Refine maxima of ``sgn*weighted`` inside ``[lo, hi]`` brackets, never losing the incumbent."""
    frac = np.linspace(0.0, 1.0, _ZOOM_POINTS)
    for _ in range(rounds):
        pts = lo[:, None] + (hi - lo)[:, None] * frac
        vals = np.asarray(weighted(pts.ravel()), dtype=float).reshape(pts.shape)
        score = np.where(np.isfinite(vals), sgn[:, None] * vals, -np.inf)
        j = np.argmax(score, axis=1)
        rows = np.arange(len(j))
        better = score[rows, j] > sgn * bv
        bt = np.where(better, pts[rows, j], bt)
        bv = np.where(better, vals[rows, j], bv)
        step = (hi - lo) / (_ZOOM_POINTS - 1)
        lo = np.maximum(bt - step, 0.0)
        hi = np.minimum(bt + step, a)
    return bt, bv


def extrema_on_grid(t, e, weighted: Callable, a: float):
    """One extremum per sign run of the sampled ``e``, refined by local zoom."""
    emax = float(np.max(np.abs(e))) if e.size else 0.0
    if emax == 0.0 or not np.isfinite(emax):
        return np.array([]), np.array([])
    runs = _runs(e, 1e-14 * emax)
    best_i = np.array([i0 + int(np.argmax(np.abs(e[i0:i1 + 1]))) for i0, i1 in runs])
    lo = t[np.maximum(best_i - 1, 0)]
    hi = t[np.minimum(best_i + 1, t.size - 1)]
    bt, bv = _zoom(weighted, a, t[best_i].copy(), e[best_i].copy(), np.sign(e[best_i]), lo, hi)
    # an endpoint within rounding of the refined value is the extremum
    for k, i_end in ((0, 0), (len(runs) - 1, t.size - 1)):
        i0, i1 = runs[k]
        if i0 <= i_end <= i1 and abs(e[i_end]) >= abs(bv[k]) * (1.0 - ENDPOINT_RTOL):
            bt[k], bv[k] = t[i_end], e[i_end]
    return bt, bv


def weighted_extrema(residual: Callable, f: Weight, a: float, count_hint: Optional[int] = None,
                     breakpoints=(), grid: int = DEFAULT_GRID) -> Extrema:
    """Local extrema of ``residual/f`` on ``[0, a]``, one per sign run, endpoints included.

    A dense grid locates the runs; each extremum is then refined by local
    zooming.  Returns a shortage report when fewer than ``count_hint``
    extrema exist (or when the residual vanishes).
    """
    if not a > 0:
        raise ParameterError("a must be positive")

    def weighted(x):
        return np.asarray(residual(x), dtype=float) / f(x)

    t = base_grid(a, breakpoints, grid)
    pts, vals = extrema_on_grid(t, weighted(t), weighted, a)
    out = Extrema(pts.tolist(), vals.tolist())
    if len(out.points) == 0:
        out.shortage, out.message = True, "residual vanishes on the grid"
    elif count_hint is not None and len(out.points) < count_hint:
        out.shortage, out.message = True, f"found {len(out.points)} extrema, wanted {count_hint}"
    return out


def chebyshev_reference(a: float, count: int):
    """Extrema of the Chebyshev polynomial of degree ``count-1`` mapped to ``[0, a]``."""
    if count == 1:
        return np.array([a])
    i = np.arange(count)
    return 0.5 * a * (1.0 - np.cos(np.pi * i / (count - 1)))


def to_monomial(coeffs, a: float):
    """Chebyshev-on-[0, a] coefficients to monomial coefficients in t."""
    p = Chebyshev(coeffs, domain=[0.0, a]).convert(kind=np.polynomial.Polynomial)
    out = np.zeros(len(coeffs))
    out[: len(p.coef)] = p.coef
    return out


def exchange_reference(ref, ref_sign, pts, vals, m):
    """New reference of m+2 alternating points from the current extrema.

    Uses the window of m+2 consecutive extrema that contains the global
    maximizer and has the largest smallest magnitude; with fewer extrema the
    global maximizer alone is swapped into the old reference.
    """
    need = m + 2
    k = len(pts)
    g = int(np.argmax(np.abs(vals)))
    if k >= need:
        best, start = -1.0, 0
        for s0 in range(max(0, g - need + 1), min(g, k - need) + 1):
            w = np.min(np.abs(vals[s0:s0 + need]))
            if w > best:
                best, start = w, s0
        return np.asarray(pts[start:start + need], dtype=float)
    ref = np.array(ref, dtype=float)
    sref = ref_sign * (-1.0) ** np.arange(len(ref))
    x, sx = pts[g], np.sign(vals[g])
    if x < ref[0]:
        if sx == sref[0]:
            ref[0] = x
        else:
            ref = np.r_[x, ref[:-1]]
    elif x > ref[-1]:
        if sx == sref[-1]:
            ref[-1] = x
        else:
            ref = np.r_[ref[1:], x]
    else:
        j = int(np.searchsorted(ref, x))
        ref[j - 1 if sref[j - 1] == sx else j] = x
    return ref


def best_weighted_poly(h: Callable, f: Weight, m: int, a: float, tol: float = 1e-12,
                       max_iter: int = 200, reference=None, breakpoints=(),
                       grid: int = DEFAULT_GRID) -> WeightedApproxResult:
    """Minimax polynomial of degree <= m for ``h`` under weight ``f`` on ``[0, a]``.

    Multi-point Remez exchange: solve the (m+2)-point levelled system, move
    the reference to the extrema of the weighted error, stop once the
    largest extremum exceeds the levelled error by at most ``tol`` relative
    (or by ``FLOOR_RTOL``, or the weighted rounding noise of h, once the
    iteration stalls).
    ``breakpoints`` (knots of h) are always on the search grid.
    """
    if m < 0:
        raise ParameterError("degree must be >= 0")
    if not a > 0:
        raise ParameterError("a must be positive")
    t = base_grid(a, breakpoints, grid)
    x = 2.0 * t / a - 1.0
    H = np.asarray(h(t), dtype=float)
    F = f(t)
    V = cheb.chebvander(x, m)
    # weighted size of rounding errors in h - Q
    noise = 1e3 * np.finfo(float).eps * float(np.max(np.abs(H))) / float(np.min(F))
    if f.kind == "const" and m == 0:
        return _midrange(h, f, a, t, H, F)

    ref = np.asarray(reference, dtype=float) if reference is not None else chebyshev_reference(a, m + 2)
    if len(ref) != m + 2:
        ref = chebyshev_reference(a, m + 2)
    signs = (-1.0) ** np.arange(m + 2)
    history, sandwich = [], []
    best = None
    for it in range(1, max_iter + 1):
        xr = 2.0 * ref / a - 1.0
        M = np.column_stack([cheb.chebvander(xr, m), signs * f(ref)])
        try:
            sol = np.linalg.solve(M, np.asarray(h(ref), dtype=float))
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(M, np.asarray(h(ref), dtype=float), rcond=None)[0]
        c, E = sol[:-1], sol[-1]

        def weighted(z, c=c):
            return (np.asarray(h(z), dtype=float) - cheb.chebval(2.0 * z / a - 1.0, c)) / f(z)

        e = (H - V @ c) / F
        pts, vals = extrema_on_grid(t, e, weighted, a)
        if len(pts) == 0:
            return WeightedApproxResult(to_monomial(c, a).tolist(), 0.0, ref.tolist(), it, history + [0.0],
                                        c.tolist(), abs(E), sandwich, ref.tolist(), [])
        dev = float(np.max(np.abs(vals)))
        history.append(dev)
        sandwich.append((abs(float(E)), dev))
        if best is None or dev < best[0]:
            best = (dev, c)
        stalled = len(history) > 4 and min(history[-3:]) >= min(history[:-3])
        at_floor = stalled and dev - abs(E) <= max(FLOOR_RTOL * dev, noise)
        if dev - abs(E) <= tol * dev or at_floor:
            window = exchange_reference(ref, np.sign(E) or 1.0, pts, vals, m)
            wv = weighted(np.asarray(window))
            return WeightedApproxResult(to_monomial(c, a).tolist(), dev, list(map(float, window)), it, history,
                                        c.tolist(), abs(float(E)), sandwich, ref.tolist(),
                                        [int(s) for s in np.sign(wv)], at_floor)
        new_ref = exchange_reference(ref, np.sign(E) or 1.0, pts, vals, m)
        if len(new_ref) != m + 2 or np.any(np.diff(new_ref) <= 0):
            new_ref = chebyshev_reference(a, m + 2) if it == 1 else ref
        ref = new_ref
    raise ConvergenceError(f"Remez exchange did not level within {max_iter} iterations",
                           history=history, best=best)


def _midrange(h, f, a, t, H, F):
    """Degree-0 approximation under a constant weight: the midrange of h."""
    w = float(F[0])
    i_hi, i_lo = int(np.argmax(H)), int(np.argmin(H))
    idx = np.array([i_hi, i_lo])
    lo = t[np.maximum(idx - 1, 0)]
    hi = t[np.minimum(idx + 1, t.size - 1)]
    bt, bv = _zoom(lambda z: np.asarray(h(z), dtype=float), a, t[idx].copy(), H[idx].copy(),
                   np.array([1.0, -1.0]), lo, hi)
    q = 0.5 * (bv[0] + bv[1])
    dev = 0.5 * (bv[0] - bv[1]) / w
    order = np.argsort(bt)
    pts = bt[order].tolist()
    signs = [1 if i == 0 else -1 for i in order]
    return WeightedApproxResult([q], dev, pts, 1, [dev], [q], dev, [(dev, dev)], pts, signs)
