"""``pgspline`` command-line front end.

Every subcommand writes JSON or CSV to ``--out`` (default stdout) and can
render a PNG next to it with ``--figure``.  Exit status: 0 success,
1 usage error, 2 numerical failure (diagnostics are still written).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import plotting
from .calculus import CLASS_FINITE, CLASS_INFINITE, classify_finiteness
from .errors import (ConvergenceError, DeltaRangeError, DomainError, NotExtremalError, ParameterError,
                     PGSplineError, PreconditionError, WeightFormatError)
from .extremal import ExtremalSolveConfig, phi_curve, solve_extremal
from .modulus import (AT_PHI_INFINITY, ModulusQuery, asymptotic_floor, matorin_constant, modulus_curve,
                      mordell_fuzz, omega_finite_case, omega_infinite_case)
from .serialization import csv_text, dumps, to_plain
from .weights import parse_weight

DEFAULTS = {
    "r": None, "n": None, "k": None, "a": None, "delta": None,
    "f": "const:1", "g": "const:1", "tol": None, "max_n": 16, "max_a": 2.0**16,
    "jobs": 1, "out": None, "format": "json", "seed": 7, "strict": False,
    "a_grid": None, "samples": None, "d": 0, "curve": "spline", "figure": None, "a_start": 1.0,
}
INT_KEYS = {"r", "n", "k", "max_n", "jobs", "seed", "samples", "d"}
FLOAT_KEYS = {"a", "tol", "max_a", "a_start"}
BOOL_KEYS = {"strict"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--r", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--delta", help="number, comma-separated list, or 'inf' for the phi(inf) level")
    p.add_argument("--f", help="weight of the uniform norm (preset or table:path)")
    p.add_argument("--g", help="weight bounding the r-th derivative")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-n", type=int, dest="max_n")
    p.add_argument("--max-a", type=float, dest="max_a")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", default=None,
                   help="re-solve from a second start and require agreement")
    p.add_argument("--figure", help="also render a PNG figure to this path")


def build_parser():
    parser = _Parser(prog="pgspline", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    specs = {
        "solve": "extremal spline on [0, a] with its equioscillation certificate",
        "phi-curve": "extremal deviation over a grid of interval lengths",
        "modulus": "modulus of continuity of D^k",
        "finiteness": "FINITE / INFINITE classification of phi at infinity",
        "floor": "whether phi(inf) stays away from 0 as n grows",
        "constants": "sharp unweighted constants from Chebyshev polynomials",
        "fuzz-mordell": "Mordell inequality margins on random splines",
        "plotdata": "polyline of a spline derivative or a curve",
    }
    for name, help_ in specs.items():
        p = sub.add_parser(name, help=help_, description=help_)
        _common(p)
        if name in ("phi-curve", "plotdata"):
            p.add_argument("--a-grid", dest="a_grid", help="comma-separated interval lengths")
        if name == "modulus":
            p.add_argument("--a-start", type=float, dest="a_start", help="first a of the doubling grid")
        if name == "fuzz-mordell":
            p.add_argument("--samples", type=int)
        if name == "plotdata":
            p.add_argument("--d", type=int, help="derivative order of the spline")
            p.add_argument("--curve", choices=("spline", "phi", "modulus"))
            p.add_argument("--samples", type=int)
    return parser


def read_config(path):
    """``key = value`` lines; ``#`` starts a comment, keys may use dashes."""
    out = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{i}: expected key=value")
        key = key.strip().replace("-", "_")
        value = value.strip().strip('"').strip("'")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{i}: unknown key {key!r}")
        try:
            if key in INT_KEYS:
                value = int(value)
            elif key in FLOAT_KEYS:
                value = float(value)
            elif key in BOOL_KEYS:
                value = value.lower() in ("1", "true", "yes", "on")
        except ValueError:
            raise UsageError(f"{path}:{i}: bad value for {key}") from None
        out[key] = value
    return out


def resolve(ns):
    """Merge defaults, config file and flags (flags win)."""
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            cfg.update(read_config(ns.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for key, value in vars(ns).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = ns.command
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{cfg['command']} needs " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _floats(text, what):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad {what} list {text!r}") from None
    if not vals:
        raise UsageError(f"empty {what} list")
    return vals


def _check_r_n_a(cfg, need_a=True):
    if cfg["r"] < 1:
        raise UsageError("r must be >= 1")
    if cfg.get("n") is not None and cfg["n"] < 0:
        raise UsageError("n must be >= 0")
    if need_a and not cfg["a"] > 0:
        raise UsageError("a must be positive")


def _solver_cfg(cfg):
    kw = {"strict": bool(cfg["strict"])}
    if cfg["tol"] is not None:
        kw["cert_tol"] = cfg["tol"]
    return ExtremalSolveConfig(**kw)


class Output:
    """Collects the document and tables of one run and writes them at the end."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.text = ""

    def json(self, doc):
        self.text = dumps(doc)

    def table(self, header, rows, doc=None):
        if self.cfg["format"] == "csv":
            self.text = csv_text(header, rows)
        else:
            self.json(doc if doc is not None else {"columns": list(header), "rows": [list(r) for r in rows]})

    def write(self):
        if self.cfg["out"]:
            Path(self.cfg["out"]).write_text(self.text, encoding="utf-8")
        else:
            sys.stdout.write(self.text)


class NumericalFailure(Exception):
    def __init__(self, doc):
        super().__init__(doc.get("error", "numerical failure"))
        self.doc = doc


def _failure(exc, **context):
    doc = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    for attr in ("history", "best", "clause", "details", "achieved"):
        if getattr(exc, attr, None) is not None:
            doc[attr] = to_plain(getattr(exc, attr))
    doc.update(context)
    return NumericalFailure(doc)


# ---------------------------------------------------------------- subcommands

def cmd_solve(cfg, out):
    _need(cfg, "r", "n", "a")
    _check_r_n_a(cfg)
    f, g = parse_weight(cfg["f"]), parse_weight(cfg["g"])
    try:
        res = solve_extremal(cfg["r"], cfg["n"], cfg["a"], f, g, _solver_cfg(cfg))
    except (ConvergenceError, NotExtremalError) as exc:
        raise _failure(exc, r=cfg["r"], n=cfg["n"], a=cfg["a"], f=f.spec, g=g.spec) from exc
    doc = res.to_json()
    doc["deviation"] = res.deviation
    doc["f"] = f.spec
    out.json(doc)
    if cfg["figure"]:
        lines = [plotting.spline_polyline(res.spline, d, 512) for d in range(res.spline.r + 1)]
        plotting.render_png(lines, cfg["figure"], f"r={res.spline.r}, n={res.spline.n}, a={res.spline.a:g}",
                            [f"G^({d})" for d in range(res.spline.r + 1)], "G^(d)(t)")


def cmd_phi_curve(cfg, out):
    _need(cfg, "r", "n", "a_grid")
    cfg = dict(cfg, a=1.0)
    _check_r_n_a(cfg)
    grid = _floats(cfg["a_grid"], "a")
    if any(not a > 0 for a in grid):
        raise UsageError("a must be positive")
    f, g = parse_weight(cfg["f"]), parse_weight(cfg["g"])
    rows = phi_curve(cfg["r"], cfg["n"], grid, f, g, _solver_cfg(cfg), cfg["jobs"])
    out.table(("a", "phi", "status"), rows,
              {"r": cfg["r"], "n": cfg["n"], "f": f.spec, "g": g.spec,
               "rows": [{"a": a, "phi": p, "status": s} for a, p, s in rows]})
    if cfg["figure"]:
        plotting.render_png(plotting.curve_polyline([r[0] for r in rows], [r[1] for r in rows], False, ("a", "phi")),
                            cfg["figure"], f"phi, r={cfg['r']}, n={cfg['n']}")
    if any(s != "ok" for _, _, s in rows):
        raise NumericalFailure({"status": "failed", "error": "some solves failed", "rows": rows,
                                "partial": out.text})


def _modulus_kw(cfg, f, g):
    kw = {"k": cfg["k"], "r": cfg["r"], "f": f, "g": g, "max_n": cfg["max_n"], "max_a": cfg["max_a"],
          "jobs": cfg["jobs"], "cfg": _solver_cfg(cfg), "a_start": cfg["a_start"]}
    if cfg["tol"] is not None:
        kw["tol"] = cfg["tol"]
    return kw


def cmd_modulus(cfg, out):
    _need(cfg, "r", "k")
    r, k = cfg["r"], cfg["k"]
    if not (r >= 2 and 1 <= k < r):
        raise UsageError(f"modulus requires 1 <= k < r, got k={k}, r={r}")
    f, g = parse_weight(cfg["f"]), parse_weight(cfg["g"])
    rep = classify_finiteness(f, g, r)
    kw = _modulus_kw(cfg, f, g)
    delta = str(cfg["delta"]).strip().lower() if cfg["delta"] is not None else "inf"
    if delta in ("inf", AT_PHI_INFINITY):
        if rep.classification != CLASS_FINITE:
            raise UsageError(f"delta=inf needs the FINITE regime, these weights are {rep.classification}")
        q = ModulusQuery(n=cfg["n"] if cfg["n"] is not None else 0, **kw)
        try:
            res = omega_finite_case(q, check=False)
        except ConvergenceError as exc:
            raise _failure(exc, query=q.to_json()) from exc
        _emit_modulus(cfg, out, res, "a")
        return
    deltas = _floats(delta, "delta")
    if any(not d > 0 for d in deltas):
        raise UsageError("delta must be positive")
    if rep.classification == CLASS_FINITE:
        raise UsageError("these weights are in the FINITE regime: use --delta inf with --n "
                         "(omega is computed at delta = phi_n(inf))")
    if rep.classification != CLASS_INFINITE:
        raise UsageError(f"finiteness classification is {rep.classification}; cannot pick a limit procedure")
    if len(deltas) == 1:
        q = ModulusQuery(delta=deltas[0], **kw)
        try:
            res = omega_infinite_case(q, check=False)
        except (ConvergenceError, DeltaRangeError) as exc:
            raise _failure(exc, query=q.to_json()) from exc
        _emit_modulus(cfg, out, res, "n")
        return
    rows = modulus_curve(deltas, **kw)
    table = [(d, None if isinstance(res, Exception) else res.omega, not isinstance(res, Exception))
             for d, res in rows]
    out.table(("delta", "omega", "converged"), table,
              {"results": [res if not isinstance(res, Exception) else {"delta": d, "error": str(res)}
                           for d, res in rows]})
    if cfg["figure"]:
        plotting.render_png(plotting.curve_polyline([t[0] for t in table], [t[1] for t in table], True,
                                                    ("delta", "omega")), cfg["figure"], f"omega(D^{k}), r={r}")
    if not all(t[2] for t in table):
        raise NumericalFailure({"status": "failed", "error": "some deltas did not converge", "partial": out.text})


def _emit_modulus(cfg, out, res, param):
    if cfg["format"] == "csv":
        delta = res.diagnostics.get("delta") if res.query.delta == AT_PHI_INFINITY else res.query.delta
        out.table(("delta", "omega", "converged"), [(delta, res.omega, res.converged)])
    else:
        out.json(res)
    if cfg["figure"]:
        plotting.render_png(plotting.curve_polyline([p for p, _ in res.trace], [v for _, v in res.trace],
                                                    param == "a", (param, "G_k0")),
                            cfg["figure"], f"|G^({res.query.k})(0)| along the sweep")


def cmd_finiteness(cfg, out):
    _need(cfg, "r")
    if cfg["r"] < 1:
        raise UsageError("r must be >= 1")
    out.json(classify_finiteness(parse_weight(cfg["f"]), parse_weight(cfg["g"]), cfg["r"]))


def cmd_floor(cfg, out):
    _need(cfg, "r")
    try:
        rep = asymptotic_floor(parse_weight(cfg["f"]), parse_weight(cfg["g"]), cfg["r"])
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    out.json(rep)


def cmd_constants(cfg, out):
    _need(cfg, "r")
    r = cfg["r"]
    if not 2 <= r <= 10:
        raise UsageError("constants needs 2 <= r <= 10")
    consts = [matorin_constant(k, r) for k in range(1, r)]
    out.table(("k", "value", "status"), [(c.k, c.value, "SHARP" if c.sharp else "BOUND") for c in consts],
              {"r": r, "rows": consts})


def cmd_fuzz_mordell(cfg, out):
    samples = cfg["samples"] if cfg["samples"] is not None else 100
    if samples < 1:
        raise UsageError("samples must be >= 1")
    rep = mordell_fuzz(samples, cfg["seed"])
    if cfg["format"] == "csv":
        out.table(("samples", "seed", "min_margin", "mean_margin"),
                  [(rep.samples, rep.seed, rep.min_margin, rep.mean_margin)])
    else:
        out.json(rep)


def cmd_plotdata(cfg, out):
    f, g = parse_weight(cfg["f"]), parse_weight(cfg["g"])
    kind = cfg["curve"]
    if kind == "spline":
        _need(cfg, "r", "n", "a")
        _check_r_n_a(cfg)
        if not 0 <= cfg["d"] <= cfg["r"]:
            raise UsageError(f"d must be in 0..{cfg['r']}")
        try:
            res = solve_extremal(cfg["r"], cfg["n"], cfg["a"], f, g, _solver_cfg(cfg))
        except (ConvergenceError, NotExtremalError) as exc:
            raise _failure(exc) from exc
        line = plotting.spline_polyline(res.spline, cfg["d"], cfg["samples"] or 512)
    elif kind == "phi":
        _need(cfg, "r", "n", "a_grid")
        rows = phi_curve(cfg["r"], cfg["n"], _floats(cfg["a_grid"], "a"), f, g, _solver_cfg(cfg), cfg["jobs"])
        line = plotting.curve_polyline([a for a, _, _ in rows], [p for _, p, _ in rows], False, ("a", "phi"))
    else:
        _need(cfg, "r", "k", "delta")
        deltas = _floats(cfg["delta"], "delta")
        rows = modulus_curve(deltas, **_modulus_kw(cfg, f, g))
        line = plotting.curve_polyline(deltas, [None if isinstance(x, Exception) else x.omega for _, x in rows],
                                       True, ("delta", "omega"))
    out.text = csv_text(line.header, line.rows)
    if cfg["figure"]:
        plotting.render_png(line, cfg["figure"])


COMMANDS = {
    "solve": cmd_solve, "phi-curve": cmd_phi_curve, "modulus": cmd_modulus, "finiteness": cmd_finiteness,
    "floor": cmd_floor, "constants": cmd_constants, "fuzz-mordell": cmd_fuzz_mordell, "plotdata": cmd_plotdata,
}


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve(ns)
        out = Output(cfg)
        COMMANDS[cfg["command"]](cfg, out)
    except (UsageError, ParameterError, WeightFormatError, DomainError) as exc:
        print(f"pgspline {ns.command}: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        doc = exc.doc
        if "partial" in doc and out.text:
            out.write()
        else:
            out.text = dumps({k: v for k, v in doc.items() if k != "partial"})
            out.write()
        print(f"pgspline {ns.command}: {doc['error']}", file=sys.stderr)
        return 2
    except PGSplineError as exc:
        out.text = dumps(_failure(exc).doc)
        out.write()
        print(f"pgspline {ns.command}: {exc}", file=sys.stderr)
        return 2
    out.write()
    return 0


if __name__ == "__main__":
    sys.exit(main())
