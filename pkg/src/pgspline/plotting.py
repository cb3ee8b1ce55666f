"""Plot-ready polylines and PNG rendering for splines and curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .gspline import PerfectGSpline


@dataclass
class Polyline:
    """Rows ``(segment, x, y)``; a new segment id marks a break in the line."""

    header: tuple
    rows: list
    loglog: bool = False
    xlabel: str = "x"
    ylabel: str = "y"


def spline_polyline(s: PerfectGSpline, d: int = 0, samples: int = 512) -> Polyline:
    """``G^(d)`` on ``[0, a]``.

    Below order r this is one segment of ``samples`` equispaced points.  For
    ``d = r`` the step function is split at the knots, each piece carrying
    its one-sided values at both ends.
    """
    if not 0 <= d <= s.r:
        raise ParameterError(f"derivative order must be in 0..{s.r}, got {d}")
    if samples < 2:
        raise ParameterError("need at least 2 samples")
    t = np.linspace(0.0, s.a, samples)
    if d < s.r or not s.knots:
        v = s.unchecked(t, d)
        rows = [(0, float(x), float(y)) for x, y in zip(t, v)]
    else:
        ends = np.r_[0.0, s.knots, s.a]
        rows = []
        for seg, (lo, hi) in enumerate(zip(ends[:-1], ends[1:])):
            inner = t[(t > lo) & (t < hi)]
            pts = np.r_[lo, inner, hi]
            vals = s.unchecked(pts, d)
            # the right end is a left limit at the knot
            vals[-1] = s.sigma(0.5 * (lo + hi)) * float(s.g(hi))
            rows += [(seg, float(x), float(y)) for x, y in zip(pts, vals)]
    return Polyline(("segment", "t", f"G{d}"), rows, False, "t", f"G^({d})(t)")


def curve_polyline(xs, ys, loglog: bool = False, names=("x", "y")) -> Polyline:
    """A sampled curve; points with missing y start a new segment, nonpositive ones are dropped in log-log."""
    rows, seg, broke = [], 0, False
    for x, y in zip(xs, ys):
        if y is None or not np.isfinite(y) or (loglog and (x <= 0 or y <= 0)):
            broke = True
            continue
        if broke and rows:
            seg += 1
        broke = False
        if loglog:
            rows.append((seg, float(np.log10(x)), float(np.log10(y))))
        else:
            rows.append((seg, float(x), float(y)))
    header = ("segment", f"log10_{names[0]}", f"log10_{names[1]}") if loglog else ("segment",) + tuple(names)
    return Polyline(header, rows, loglog, header[1], header[2])


def render_png(lines, path, title: str = "", labels=None, ylabel=None):
    """Draw one or more polylines to a PNG file (matplotlib, non-interactive backend)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(lines, Polyline):
        lines = [lines]
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    for i, line in enumerate(lines):
        rows = np.array([r[:3] for r in line.rows], dtype=float).reshape(-1, 3)
        color = f"C{i}"
        for j, seg in enumerate(np.unique(rows[:, 0])):
            part = rows[rows[:, 0] == seg]
            label = (labels[i] if labels else None) if j == 0 else None
            ax.plot(part[:, 1], part[:, 2], color=color, lw=1.2, label=label,
                    marker="o" if len(part) < 40 else None, ms=3)
    ax.set_xlabel(lines[0].xlabel)
    ax.set_ylabel(ylabel or lines[0].ylabel)
    ax.axhline(0.0, color="0.7", lw=0.6)
    if title:
        ax.set_title(title)
    if labels:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
