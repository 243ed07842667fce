"""Bare-bones SVG line and step charts (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 640, 420, 60


def _ticks(lo, hi, k=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def plot_svg(path, series, title="", xlabel="", ylabel="", step=False, logx=False,
             ylim=None) -> None:
    """Write ``series`` (a list of ``(label, xs, ys)``) as an SVG chart.

    ``step=True`` draws right-continuous steps, ``logx`` uses a log10 x axis.
    """
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    allx = [tx(x) for _, xs, _ in series for x in xs if (x > 0 or not logx) and math.isfinite(x)]
    ally = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    x0, x1 = (min(allx), max(allx)) if allx else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    y0, y1 = ylim if ylim else ((min(ally), max(ally)) if ally else (0.0, 1.0))
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(x):
        return PAD + (tx(x) - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(y):
        return H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{H / 2}" text-anchor="middle" '
           f'transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>']
    for t in _ticks(x0, x1):
        xv = 10**t if logx else t
        out.append(f'<text x="{px(xv):.1f}" y="{H - PAD + 16}" text-anchor="middle">{xv:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{PAD - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    for i, (label, xs, ys) in enumerate(series):
        pts = [(x, y) for x, y in zip(xs, ys) if (x > 0 or not logx) and math.isfinite(x)]
        if not pts:
            continue
        color = _COLORS[i % len(_COLORS)]
        coords = []
        for j, (x, y) in enumerate(pts):
            if step and j:
                coords.append(f"{px(x):.1f},{py(pts[j - 1][1]):.1f}")
            coords.append(f"{px(x):.1f},{py(y):.1f}")
        if step:
            coords.append(f"{W - PAD:.1f},{py(pts[-1][1]):.1f}")
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{" ".join(coords)}"/>')
        ly = PAD + 16 * i
        out.append(f'<text x="{W - PAD - 4}" y="{ly}" text-anchor="end" fill="{color}">'
                   f'{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
