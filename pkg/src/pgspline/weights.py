"""Weight functions on the half-line.

A weight is a continuous, positive, non-increasing function on ``[0, inf)``.
Two weights enter every problem in this package: ``f`` divides the function
values (the weighted uniform norm) and ``g`` bounds the top derivative.

Besides the evaluator, a :class:`Weight` carries optional metadata about its
behaviour at infinity.  The tail is described by a :class:`TailClass`, an
asymptotic form ``log w(t) = -quad*t**2 - rate*t + power*log(t) + C + o(1)``.
Improper integrals and sup-ratios over the half-line are only decided with
such a certificate; without one the calculus module falls back to recorded
heuristics.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, WeightFormatError

SQRT3 = math.sqrt(3.0)
MONOTONE_RTOL = 1e-12


@dataclass(frozen=True)
class TailClass:
    """Asymptotic class of a positive function at infinity.

    ``log w(t) = -quad*t**2 - rate*t + power*log(t) + O(1)``, with the O(1)
    term converging.  Two functions of the same class have a ratio tending
    to a finite positive constant.
    """

    quad: float = 0.0
    rate: float = 0.0
    power: float = 0.0

    def integrable(self, k: int = 0) -> bool:
        """Whether ``t**k * w(t)`` is integrable at infinity."""
        return self.quad > 0 or self.rate > 0 or self.power + k < -1

    def tail_integral(self) -> Optional["TailClass"]:
        """Class of ``t -> int_t^inf w``; ``None`` when the integral diverges."""
        if self.quad > 0:
            return TailClass(self.quad, self.rate, self.power - 1)
        if self.rate > 0:
            return TailClass(0.0, self.rate, self.power)
        if self.power < -1:
            return TailClass(0.0, 0.0, self.power + 1)
        return None

    def compare(self, other: "TailClass") -> int:
        """Limit of ``self/other``: +1 for infinity, -1 for zero, 0 for a positive constant."""
        for mine, theirs in ((self.quad, other.quad), (self.rate, other.rate)):
            if not math.isclose(mine, theirs, rel_tol=1e-12, abs_tol=1e-15):
                return 1 if mine < theirs else -1
        if not math.isclose(self.power, other.power, rel_tol=1e-12, abs_tol=1e-15):
            return 1 if self.power > other.power else -1
        return 0

    def describe(self) -> str:
        parts = []
        if self.quad:
            parts.append(f"exp(-{self.quad:g} t^2)")
        if self.rate:
            parts.append(f"exp(-{self.rate:g} t)")
        if self.power:
            parts.append(f"t^{self.power:g}")
        return " * ".join(parts) if parts else "constant"


@dataclass(frozen=True, eq=False)
class Weight:
    """A positive non-increasing function on ``[0, inf)`` with tail metadata.

    Instances are immutable and safe to share between threads or processes
    (preset weights pickle by spec string).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: str
    spec: str
    params: tuple = ()
    limit_at_infinity: Optional[float] = None
    tail: Optional[TailClass] = None
    tail_descriptor: str = "unknown"
    log_evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breakpoints: tuple = field(default=(), repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.evaluator(t)

    def log(self, t):
        """Natural log of the weight, finite even where the weight underflows."""
        t = np.asarray(t, dtype=float)
        if self.log_evaluator is not None:
            return self.log_evaluator(t)
        with np.errstate(divide="ignore"):
            return np.log(self.evaluator(t))

    def __reduce__(self):
        # presets are rebuilt from their spec string in worker processes
        if self.kind in _PRESETS or self.kind == "table":
            return (parse_weight, (self.spec,))
        return object.__reduce__(self)

    def __repr__(self):
        return f"Weight({self.spec!r})"


@dataclass(frozen=True)
class WeightPreset:
    name: str
    parameters: tuple = ()


@dataclass
class WeightValidation:
    ok: bool
    positive: bool
    monotone: bool
    witness_t: Optional[float] = None
    message: str = ""


def _const(params):
    (c,) = params
    if not c > 0:
        raise ParameterError(f"const weight needs c > 0, got {c}")
    return Weight(
        evaluator=lambda t: np.full(np.shape(t), float(c)),
        log_evaluator=lambda t: np.full(np.shape(t), math.log(c)),
        kind="const",
        spec=f"const:{c:g}",
        params=(float(c),),
        limit_at_infinity=float(c),
        tail=TailClass(),
        tail_descriptor=f"constant {c:g}",
    )


def _exp(params):
    (lam,) = params
    if not lam > 0:
        raise ParameterError(f"exp weight needs lambda > 0, got {lam}")
    return Weight(
        evaluator=lambda t: np.exp(-lam * t),
        log_evaluator=lambda t: -lam * t,
        kind="exp",
        spec=f"exp:{lam:g}",
        params=(float(lam),),
        limit_at_infinity=0.0,
        tail=TailClass(rate=float(lam)),
        tail_descriptor=f"exponential with rate {lam:g}",
    )


def _pow(params):
    (p,) = params
    if not p > 0:
        raise ParameterError(f"pow weight needs p > 0, got {p}")
    return Weight(
        evaluator=lambda t: (1.0 + t) ** (-p),
        log_evaluator=lambda t: -p * np.log1p(t),
        kind="pow",
        spec=f"pow:{p:g}",
        params=(float(p),),
        limit_at_infinity=0.0,
        tail=TailClass(power=-float(p)),
        tail_descriptor=f"power with exponent {p:g}",
    )


def _gauss_f(params):
    def log_f(t):
        u = t + SQRT3
        return -0.5 * u * u

    return Weight(
        evaluator=lambda t: np.exp(log_f(t)),
        log_evaluator=log_f,
        kind="gauss-paper-f",
        spec="gauss-paper-f",
        limit_at_infinity=0.0,
        tail=TailClass(quad=0.5, rate=SQRT3),
        tail_descriptor="gaussian exp(-(t+sqrt3)^2/2)",
    )


def _gauss_g(params):
    def log_g(t):
        u = t + SQRT3
        return np.log(u * u - 1.0) - 0.5 * u * u

    return Weight(
        evaluator=lambda t: np.exp(log_g(t)),
        log_evaluator=log_g,
        kind="gauss-paper-g",
        spec="gauss-paper-g",
        limit_at_infinity=0.0,
        tail=TailClass(quad=0.5, rate=SQRT3, power=2.0),
        tail_descriptor="gaussian (u^2-1) exp(-u^2/2), u = t+sqrt3",
    )


_PRESETS = {
    "const": (_const, 1),
    "exp": (_exp, 1),
    "pow": (_pow, 1),
    "gauss-paper-f": (_gauss_f, 0),
    "gauss-paper-g": (_gauss_g, 0),
}


def make_weight(preset: WeightPreset) -> Weight:
    """Build a catalog weight from a preset name and its parameters."""
    try:
        builder, nparams = _PRESETS[preset.name]
    except KeyError:
        raise ParameterError(f"unknown weight preset {preset.name!r}") from None
    params = tuple(float(p) for p in preset.parameters)
    if len(params) != nparams:
        raise ParameterError(f"preset {preset.name!r} takes {nparams} parameter(s), got {len(params)}")
    return builder(params)


def parse_weight(spec: str) -> Weight:
    """Parse the CLI syntax ``const:c``, ``exp:lambda``, ``pow:p``, ``gauss-paper-f``,
    ``gauss-paper-g`` or ``table:path``."""
    spec = spec.strip()
    if spec.startswith("table:"):
        return load_table_weight(spec[len("table:"):])
    name, _, rest = spec.partition(":")
    params = []
    if rest:
        try:
            params = [float(v) for v in rest.split(",")]
        except ValueError:
            raise ParameterError(f"bad weight parameters in {spec!r}") from None
    return make_weight(WeightPreset(name, tuple(params)))


def weight_from_function(fn: Callable, name: str = "user", tail: Optional[TailClass] = None,
                         limit_at_infinity: Optional[float] = None) -> Weight:
    """Wrap an arbitrary vectorized callable. No hypotheses are checked."""
    return Weight(
        evaluator=lambda t: np.asarray(fn(t), dtype=float) * np.ones(np.shape(t)),
        kind="user",
        spec=name,
        limit_at_infinity=limit_at_infinity,
        tail=tail,
        tail_descriptor=tail.describe() if tail else "unknown",
    )


def tabulate_weight(ts, values, name: str = "table", validate: bool = True) -> Weight:
    """Piecewise-linear weight through ``(ts, values)`` with a constant tail.

    With ``validate`` the table must start at 0, be strictly increasing in t,
    positive and non-increasing in value; violations raise WeightFormatError.
    """
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(values, dtype=float)
    if validate:
        _check_table(ts, vs, rows=range(1, len(ts) + 1))
    last = float(vs[-1])

    def evaluator(t):
        return np.interp(t, ts, vs, right=last)

    inner = tuple(float(x) for x in ts[1:-1]) + ((float(ts[-1]),) if len(ts) > 1 else ())
    return Weight(
        evaluator=evaluator,
        kind="table",
        spec=name,
        params=(),
        limit_at_infinity=last,
        tail=TailClass(),
        tail_descriptor=f"constant extension by last tabulated value {last:g} beyond t={ts[-1]:g}",
        breakpoints=inner,
    )


def _check_table(ts, vs, rows):
    rows = list(rows)
    if len(ts) == 0:
        raise WeightFormatError("table is empty")
    if ts[0] != 0.0:
        raise WeightFormatError(f"row {rows[0]}: grid must start at t=0, got {ts[0]:g}")
    for i in range(len(ts)):
        if not vs[i] > 0:
            raise WeightFormatError(f"row {rows[i]}: value {vs[i]:g} is not positive")
        if i == 0:
            continue
        if not ts[i] > ts[i - 1]:
            raise WeightFormatError(f"row {rows[i]}: t={ts[i]:g} does not increase")
        if vs[i] > vs[i - 1]:
            raise WeightFormatError(f"row {rows[i]}: value increases ({vs[i - 1]:g} -> {vs[i]:g})")


def load_table_weight(path) -> Weight:
    """Read a two-column ``t, value`` table (comma or whitespace separated, ``#`` comments)."""
    path = Path(path)
    ts, vs, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cols = [c for c in re.split(r"[,\s]+", line) if c]
            if len(cols) != 2:
                raise WeightFormatError(f"row {lineno}: expected two columns, got {len(cols)}")
            try:
                t, v = float(cols[0]), float(cols[1])
            except ValueError:
                raise WeightFormatError(f"row {lineno}: non-numeric entry {line!r}") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise WeightFormatError(f"row {lineno}: non-finite entry {line!r}")
            ts.append(t)
            vs.append(v)
            rows.append(lineno)
    ts, vs = np.array(ts), np.array(vs)
    _check_table(ts, vs, rows)
    return tabulate_weight(ts, vs, name=f"table:{path}", validate=False)


def validate_weight(w: Weight, horizon: float, samples: int) -> WeightValidation:
    """Check positivity and monotonicity of ``w`` on a uniform grid over ``[0, horizon]``.

    Comparisons run on ``log w`` with relative tolerance 1e-12, so weights that
    underflow in double precision (the gaussian presets far out) still pass.
    """
    if not horizon > 0 or samples < 2:
        raise ParameterError("validate_weight needs horizon > 0 and samples >= 2")
    t = np.linspace(0.0, horizon, int(samples))
    logw = np.asarray(w.log(t), dtype=float)
    bad = ~np.isfinite(logw)
    if bad.any():
        i = int(np.argmax(bad))
        return WeightValidation(False, False, True, float(t[i]), f"weight is not positive at t={t[i]:g}")
    rises = np.diff(logw) > MONOTONE_RTOL
    if rises.any():
        i = int(np.argmax(rises))
        return WeightValidation(False, True, False, float(t[i + 1]),
                                f"weight increases between t={t[i]:g} and t={t[i + 1]:g}")
    return WeightValidation(True, True, True, None, "ok")
