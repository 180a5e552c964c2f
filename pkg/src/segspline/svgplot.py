"""Minimal deterministic SVG rendering of a gene's fit and band.

String assembly only, with fixed-precision coordinates, so identical
inputs give byte-identical files.  Styling follows the usual look for
these models: grey band surface, solid fitted curve, observations
coloured by their aberration call, dashed verticals at the knots.
"""

from __future__ import annotations

import numpy as np

from .model import GeneRecord, KnotSet

_WIDTH = 640
_HEIGHT = 440
_MARGIN_L = 64
_MARGIN_R = 20
_MARGIN_T = 34
_MARGIN_B = 52

STATE_COLOURS = {
    -1: "#1f6fb5",  # loss
    0: "#6b6b6b",  # normal
    1: "#d0342c",  # gain
    2: "#7a0b06",  # amplification
}

STATE_LEGEND = ((-1, "loss"), (0, "normal"), (1, "gain"), (2, "amplification"))


def _fmt(v: float) -> str:
    return format(float(v), ".2f")


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


class _Frame:
    """Data-to-pixel transform for one panel."""

    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        self.xlo, self.xhi = xlo, xhi
        self.ylo, self.yhi = ylo, yhi

    def px(self, x):
        span = _WIDTH - _MARGIN_L - _MARGIN_R
        return _MARGIN_L + (x - self.xlo) / (self.xhi - self.xlo) * span

    def py(self, y):
        span = _HEIGHT - _MARGIN_T - _MARGIN_B
        return _HEIGHT - _MARGIN_B - (y - self.ylo) / (self.yhi - self.ylo) * span


def svg_band_plot(record: GeneRecord, grid, knotset: KnotSet, title: str = "") -> str:
    """Scatter + band + fit for one gene as an SVG document string."""
    x, y = record.x, record.y
    xlo = float(min(np.min(x), np.min(grid.xs)))
    xhi = float(max(np.max(x), np.max(grid.xs)))
    ylo = float(min(np.min(y), np.min(grid.lower)))
    yhi = float(max(np.max(y), np.max(grid.upper)))
    pad_x = 0.04 * (xhi - xlo or 1.0)
    pad_y = 0.06 * (yhi - ylo or 1.0)
    fr = _Frame(xlo - pad_x, xhi + pad_x, ylo - pad_y, yhi + pad_y)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
    ]

    # band polygon: upper edge left-to-right, lower edge back
    pts = []
    for i in range(grid.xs.size):
        pts.append(f"{_fmt(fr.px(grid.xs[i]))},{_fmt(fr.py(grid.upper[i]))}")
    for i in range(grid.xs.size - 1, -1, -1):
        pts.append(f"{_fmt(fr.px(grid.xs[i]))},{_fmt(fr.py(grid.lower[i]))}")
    parts.append(f'<polygon points="{" ".join(pts)}" fill="#c9c9c9" fill-opacity="0.75"/>')

    for knot in knotset.knots:
        kx = _fmt(fr.px(knot))
        parts.append(
            f'<line x1="{kx}" y1="{_fmt(fr.py(fr.ylo))}" x2="{kx}" y2="{_fmt(fr.py(fr.yhi))}" '
            'stroke="#999999" stroke-width="1" stroke-dasharray="4,3"/>'
        )

    fit_pts = " ".join(
        f"{_fmt(fr.px(grid.xs[i]))},{_fmt(fr.py(grid.fitted[i]))}" for i in range(grid.xs.size)
    )
    parts.append(
        f'<polyline points="{fit_pts}" fill="none" stroke="#111111" stroke-width="2"/>'
    )

    for i in range(record.n):
        colour = STATE_COLOURS[int(record.s[i])]
        parts.append(
            f'<circle cx="{_fmt(fr.px(x[i]))}" cy="{_fmt(fr.py(y[i]))}" r="3.2" '
            f'fill="{colour}" fill-opacity="0.85"/>'
        )

    # axes
    x0, y0 = _fmt(fr.px(fr.xlo)), _fmt(fr.py(fr.ylo))
    x1, y1 = _fmt(fr.px(fr.xhi)), _fmt(fr.py(fr.yhi))
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000" stroke-width="1"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000" stroke-width="1"/>')
    for t in _ticks(fr.xlo, fr.xhi):
        tx = _fmt(fr.px(t))
        parts.append(
            f'<line x1="{tx}" y1="{y0}" x2="{tx}" y2="{_fmt(float(y0) + 5)}" stroke="#000"/>'
        )
        parts.append(
            f'<text x="{tx}" y="{_fmt(float(y0) + 18)}" font-size="11" text-anchor="middle" '
            f'font-family="sans-serif">{format(t, ".2g")}</text>'
        )
    for t in _ticks(fr.ylo, fr.yhi):
        ty = _fmt(fr.py(t))
        parts.append(
            f'<line x1="{x0}" y1="{ty}" x2="{_fmt(float(x0) - 5)}" y2="{ty}" stroke="#000"/>'
        )
        parts.append(
            f'<text x="{_fmt(float(x0) - 8)}" y="{_fmt(float(ty) + 4)}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{format(t, ".2g")}</text>'
        )

    parts.append(
        f'<text x="{_WIDTH // 2}" y="{_HEIGHT - 14}" font-size="12" text-anchor="middle" '
        'font-family="sans-serif">DNA copy number (log2 ratio)</text>'
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT // 2}" font-size="12" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 16 {_HEIGHT // 2})">'
        "mRNA expression (log2)</text>"
    )
    if title:
        parts.append(
            f'<text x="{_WIDTH // 2}" y="20" font-size="13" text-anchor="middle" '
            f'font-family="sans-serif">{_escape(title)}</text>'
        )

    lx = _WIDTH - _MARGIN_R - 150
    ly = _MARGIN_T + 6
    present = {int(v) for v in record.s}
    for code, label in STATE_LEGEND:
        if code not in present:
            continue
        parts.append(
            f'<circle cx="{lx}" cy="{ly}" r="3.2" fill="{STATE_COLOURS[code]}"/>'
        )
        parts.append(
            f'<text x="{lx + 8}" y="{ly + 4}" font-size="11" font-family="sans-serif">'
            f"{label}</text>"
        )
        ly += 16

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )


def write_svg(path: str, content: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(content)
