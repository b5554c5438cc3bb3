"""Minimal deterministic SVG line plots.

No plotting library is needed for three panel types, and writing the markup
directly keeps the output byte-identical for identical input.
"""

import math

from .reports import read_csv

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 30, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
KINDS = ("profile", "survival", "bound-overlay")


def _n(v: float) -> str:
    return f"{v:.3f}"


def _ticks(lo: float, hi: float, k: int = 5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def render_svg(series, title: str = "", xlabel: str = "", ylabel: str = "", step: bool = False) -> str:
    """``series`` is a list of ``(label, xs, ys)``; non-finite points are skipped."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - ML - MR, H - MT - MB

    def sx(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MT + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<g stroke="black" stroke-width="1"><line x1="{ML}" y1="{MT + ph}" x2="{ML + pw}" y2="{MT + ph}"/>'
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{MT + ph}"/></g>',
    ]
    for tx in _ticks(x0, x1):
        out.append(f'<text x="{_n(sx(tx))}" y="{MT + ph + 16}" font-size="11" text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(y0, y1):
        out.append(f'<text x="{ML - 6}" y="{_n(sy(ty) + 4)}" font-size="11" text-anchor="end">{ty:.3g}</text>')
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="18" font-size="14" text-anchor="middle">{title}</text>')
    if xlabel:
        out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 10}" font-size="12" text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{MT + ph / 2:.1f}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {MT + ph / 2:.1f})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        col = COLORS[i % len(COLORS)]
        seg = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if not seg:
            continue
        coords = []
        prev = None
        for x, y in seg:
            if step and prev is not None:
                coords.append(f"{_n(sx(x))},{_n(sy(prev))}")
            coords.append(f"{_n(sx(x))},{_n(sy(y))}")
            prev = y
        out.append(f'<polyline class="curve" fill="none" stroke="{col}" stroke-width="1.5" points="{" ".join(coords)}"/>')
        out.append(f'<text x="{ML + pw - 4}" y="{MT + 14 + 14 * i}" font-size="11" text-anchor="end" fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _col(header, rows, name):
    j = header.index(name)
    return [float(r[j]) for r in rows]


def plot_csv(csv_path, kind: str, svg_path) -> int:
    """Render ``csv_path`` as an SVG panel; returns the number of curves drawn."""
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {KINDS}")
    header, rows = read_csv(csv_path)
    series = []
    xlabel = ylabel = ""
    step = False
    if rows:
        need = {"profile": ["r", "F_N"], "survival": ["hit_time", "censored"], "bound-overlay": ["k", "empirical", "bound"]}[kind]
        for c in need:
            if c not in header:
                raise ValueError(f"{csv_path}: missing column {c!r} for plot kind {kind}")
        if kind == "profile":
            r = _col(header, rows, "r")
            series.append(("F_N", r, _col(header, rows, "F_N")))
            if "energy" in header and "entropy" in header:
                series.append(("energy", r, _col(header, rows, "energy")))
                series.append(("entropy", r, _col(header, rows, "entropy")))
            xlabel, ylabel = "r", "free entropy"
        elif kind == "survival":
            times = _col(header, rows, "hit_time")
            cens = _col(header, rows, "censored")
            n = len(times)
            ev = sorted(t for t, c in zip(times, cens) if not c)
            horizon = max(times) if times else 1.0
            xs, ys = [0.0], [1.0]
            for k, t in enumerate(ev, start=1):
                xs.append(t)
                ys.append(1.0 - k / n)
            xs.append(horizon)
            ys.append(ys[-1])
            series.append(("survival", xs, ys))
            xlabel, ylabel, step = "iteration", "fraction not yet hit", True
        else:
            k = _col(header, rows, "k")
            series.append(("empirical", k, _col(header, rows, "empirical")))
            series.append(("bound", k, [min(b, 1.0) for b in _col(header, rows, "bound")]))
            xlabel, ylabel = "k", "Pr(hit by k)"
    svg = render_svg(series, title=kind, xlabel=xlabel, ylabel=ylabel, step=step)
    with open(svg_path, "w") as fh:
        fh.write(svg)
    return len(series)
