"""Deterministic SVG plots of summary rows (most probable fidelity with 1/e bars).

Only summary rows ``(m, sigma, method, f_mode, err_left, err_right, ...)``
are consumed. All coordinates are printed with fixed precision so that the
same rows always give the same bytes.
"""

import math
import os

from .harness import SWEEP_METHODS

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=80, right=150, top=30, bottom=60)
COLORS = {
    "brisbane": "#1f77b4",
    "bristol": "#d62728",
    "vienna": "#2ca02c",
    "vienna-reduced": "#9467bd",
}
FALLBACK_COLORS = ("#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _finite(x):
    return x is not None and math.isfinite(x)


def plot_layout(rows, x="sigma", fixed=None):
    """Series and axis ranges for a plot of fidelity against ``x``.

    ``x`` is ``"sigma"`` or ``"m"``; rows are restricted to those whose other
    coordinate equals ``fixed`` (default: the largest value present).
    Returns ``{"series": {method: [(x, f, err_left, err_right), ...]},
    "x_range": (lo, hi), "y_range": (lo, hi), "fixed": value}``.
    """
    if x not in ("sigma", "m"):
        raise ValueError(f"x must be 'sigma' or 'm', not {x!r}")
    xi, oi = (1, 0) if x == "sigma" else (0, 1)
    rows = [r for r in rows if _finite(r[3])]
    if not rows:
        raise ValueError("no finite summary rows to plot")
    if fixed is None:
        fixed = max(r[oi] for r in rows)
    rows = [r for r in rows if r[oi] == fixed]
    if not rows:
        raise ValueError(f"no rows with {'m' if x == 'sigma' else 'sigma'} = {fixed}")
    order = {mu: n for n, mu in enumerate(SWEEP_METHODS)}
    methods = sorted({r[2] for r in rows}, key=lambda mu: (order.get(mu, len(order)), mu))
    series = {}
    for mu in methods:
        pts = sorted((r[xi], r[3], r[4] if _finite(r[4]) else 0.0, r[5] if _finite(r[5]) else 0.0)
                     for r in rows if r[2] == mu)
        series[mu] = pts
    xs = [p[0] for pts in series.values() for p in pts]
    lo_y = min(p[1] - p[2] for pts in series.values() for p in pts)
    hi_y = max(p[1] + p[3] for pts in series.values() for p in pts)
    return {"series": series, "x_range": _pad(min(xs), max(xs)), "y_range": _pad(lo_y, hi_y), "fixed": fixed}


def _pad(lo, hi):
    span = hi - lo
    if span <= 0:
        span = abs(hi) * 0.1 or 1.0
        return lo - span / 2, hi + span / 2
    return lo - 0.05 * span, hi + 0.05 * span


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def render_svg(layout, x="sigma"):
    x0, x1 = layout["x_range"]
    y0, y1 = layout["y_range"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    sx = lambda v: MARGIN["left"] + (v - x0) / (x1 - x0) * pw
    sy = lambda v: MARGIN["top"] + (y1 - v) / (y1 - y0) * ph
    f = lambda v: f"{v:.2f}"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{f(sx(v))}" y1="{f(MARGIN["top"] + ph)}" x2="{f(sx(v))}" '
                   f'y2="{f(MARGIN["top"] + ph + 5)}" stroke="black"/>')
        out.append(f'<text x="{f(sx(v))}" y="{f(MARGIN["top"] + ph + 20)}" text-anchor="middle">{v:.4g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{f(sy(v))}" x2="{MARGIN["left"]}" y2="{f(sy(v))}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{f(sy(v) + 4)}" text-anchor="end">{v:.5g}</text>')
    xlabel = "sigma" if x == "sigma" else "m"
    other = f"m = {layout['fixed']}" if x == "sigma" else f"sigma = {layout['fixed']:.4g}"
    out.append(f'<text x="{f(MARGIN["left"] + pw / 2)}" y="{HEIGHT - 15}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="20" y="{f(MARGIN["top"] + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 20 {f(MARGIN["top"] + ph / 2)})">most probable fidelity</text>')
    out.append(f'<text x="{f(MARGIN["left"] + pw / 2)}" y="18" text-anchor="middle">{other}</text>')
    spare = iter(FALLBACK_COLORS * 4)
    for n, (mu, pts) in enumerate(layout["series"].items()):
        color = COLORS.get(mu) or next(spare)
        out.append(f'<g class="series" data-method="{mu}" stroke="{color}" fill="{color}">')
        path = " ".join(f"{f(sx(p[0]))},{f(sy(p[1]))}" for p in pts)
        out.append(f'<polyline points="{path}" fill="none"/>')
        for xv, fv, el, er in pts:
            out.append(f'<line x1="{f(sx(xv))}" y1="{f(sy(fv - el))}" x2="{f(sx(xv))}" y2="{f(sy(fv + er))}"/>')
            out.append(f'<circle cx="{f(sx(xv))}" cy="{f(sy(fv))}" r="3"/>')
        out.append("</g>")
        ly = MARGIN["top"] + 15 + 20 * n
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{mu}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_fidelity(rows, x="sigma", fixed=None):
    """SVG text of the most probable fidelity against ``x``, one series per method."""
    return render_svg(plot_layout(rows, x, fixed), x)


def write_plots(rows, outdir, prefix="fidelity"):
    """Write one plot against sigma per m and, when several m exist, one against m per sigma.

    Returns the written paths in a fixed order.
    """
    rows = [r for r in rows if _finite(r[3])]
    paths = []
    for m in sorted({r[0] for r in rows}):
        path = os.path.join(outdir, f"{prefix}_vs_sigma_m{m}.svg")
        with open(path, "w") as fp:
            fp.write(plot_fidelity(rows, "sigma", m))
        paths.append(path)
    if len({r[0] for r in rows}) > 1:
        for sigma in sorted({r[1] for r in rows}):
            path = os.path.join(outdir, f"{prefix}_vs_m_sigma{sigma:g}.svg")
            with open(path, "w") as fp:
                fp.write(plot_fidelity(rows, "m", sigma))
            paths.append(path)
    return paths
