"""Tiny deterministic SVG line plots: polylines, axes, ticks, text.

Report artifacts need plots that hash identically across reruns, so this
writer avoids any plotting library: fixed palette, fixed float formatting,
no timestamps, no randomness.  Output is a complete standalone SVG document.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 56.0, 16.0, 28.0, 44.0


def _fmt(v: float) -> str:
    # fixed two-decimal pixel coordinates keep files small and byte-stable
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list:
    """About n round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo != 0 else 1.0)
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks or [lo, hi]


class LinePlot:
    """Accumulates series and renders one SVG chart."""

    def __init__(self, title: str, xlabel: str, ylabel: str,
                 width: int = 640, height: int = 420, logy: bool = False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.width = float(width)
        self.height = float(height)
        self.logy = logy
        self.series = []      # (xs, ys, label)
        self.errorbars = []   # (xs, lo, hi, series_index)

    def add_series(self, xs: Sequence[float], ys: Sequence[float],
                   label: Optional[str] = None):
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys):
            raise ValueError("series xs and ys must have equal length")
        self.series.append((xs, ys, label))

    def add_errorbars(self, xs, lo, hi, series_index: Optional[int] = None):
        idx = len(self.series) - 1 if series_index is None else series_index
        self.errorbars.append(([float(v) for v in xs], [float(v) for v in lo],
                               [float(v) for v in hi], idx))

    def _y(self, v: float) -> float:
        return math.log10(v) if self.logy else v

    def _limits(self):
        xs_all = [x for xs, _, _ in self.series for x in xs]
        ys_all = [self._y(y) for _, ys, _ in self.series for y in ys]
        for _, lo, hi, _ in self.errorbars:
            ys_all.extend(self._y(v) for v in lo)
            ys_all.extend(self._y(v) for v in hi)
        if not xs_all:
            xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = min(xs_all), max(xs_all)
        y0, y1 = min(ys_all), max(ys_all)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._limits()
        px0, px1 = _MARGIN_L, self.width - _MARGIN_R
        py0, py1 = self.height - _MARGIN_B, _MARGIN_T

        def X(v):
            return px0 + (v - x0) / (x1 - x0) * (px1 - px0)

        def Y(v):
            v = self._y(v)
            return py0 + (v - y0) / (y1 - y0) * (py1 - py0)

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(self.width)}" '
            f'height="{int(self.height)}" viewBox="0 0 {int(self.width)} {int(self.height)}">',
            f'<rect width="{int(self.width)}" height="{int(self.height)}" fill="white"/>',
            f'<text x="{_fmt(self.width / 2)}" y="18" text-anchor="middle" '
            f'font-family="monospace" font-size="13">{self.title}</text>',
        ]
        # axes box
        out.append(
            f'<rect x="{_fmt(px0)}" y="{_fmt(py1)}" width="{_fmt(px1 - px0)}" '
            f'height="{_fmt(py0 - py1)}" fill="none" stroke="black" stroke-width="1"/>'
        )
        for t in _nice_ticks(x0, x1):
            if not (x0 <= t <= x1):
                continue
            px = X(t)
            out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(py0)}" x2="{_fmt(px)}" '
                       f'y2="{_fmt(py0 + 5)}" stroke="black" stroke-width="1"/>')
            out.append(f'<text x="{_fmt(px)}" y="{_fmt(py0 + 18)}" text-anchor="middle" '
                       f'font-family="monospace" font-size="11">{_tick_label(t)}</text>')
        for t in _nice_ticks(y0, y1):
            if not (y0 <= t <= y1):
                continue
            py = py0 + (t - y0) / (y1 - y0) * (py1 - py0)
            label = _tick_label(10.0 ** t if self.logy else t)
            out.append(f'<line x1="{_fmt(px0 - 5)}" y1="{_fmt(py)}" x2="{_fmt(px0)}" '
                       f'y2="{_fmt(py)}" stroke="black" stroke-width="1"/>')
            out.append(f'<text x="{_fmt(px0 - 8)}" y="{_fmt(py + 4)}" text-anchor="end" '
                       f'font-family="monospace" font-size="11">{label}</text>')
        out.append(f'<text x="{_fmt((px0 + px1) / 2)}" y="{_fmt(self.height - 8)}" '
                   f'text-anchor="middle" font-family="monospace" font-size="12">'
                   f'{self.xlabel}</text>')
        out.append(f'<text x="14" y="{_fmt((py0 + py1) / 2)}" text-anchor="middle" '
                   f'font-family="monospace" font-size="12" transform="rotate(-90 14 '
                   f'{_fmt((py0 + py1) / 2)})">{self.ylabel}</text>')

        for xs, lo, hi, idx in self.errorbars:
            color = PALETTE[idx % len(PALETTE)]
            for x, a, b in zip(xs, lo, hi):
                px, pa, pb = X(x), Y(a), Y(b)
                out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(pa)}" x2="{_fmt(px)}" '
                           f'y2="{_fmt(pb)}" stroke="{color}" stroke-width="1"/>')
                for py in (pa, pb):
                    out.append(f'<line x1="{_fmt(px - 3)}" y1="{_fmt(py)}" '
                               f'x2="{_fmt(px + 3)}" y2="{_fmt(py)}" '
                               f'stroke="{color}" stroke-width="1"/>')

        legend_y = py1 + 14.0
        for i, (xs, ys, label) in enumerate(self.series):
            color = PALETTE[i % len(PALETTE)]
            pts = " ".join(f"{_fmt(X(x))},{_fmt(Y(y))}" for x, y in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')
            if label:
                out.append(f'<line x1="{_fmt(px1 - 150)}" y1="{_fmt(legend_y)}" '
                           f'x2="{_fmt(px1 - 130)}" y2="{_fmt(legend_y)}" '
                           f'stroke="{color}" stroke-width="1.5"/>')
                out.append(f'<text x="{_fmt(px1 - 124)}" y="{_fmt(legend_y + 4)}" '
                           f'font-family="monospace" font-size="11">{label}</text>')
                legend_y += 14.0
        out.append("</svg>")
        return "\n".join(out) + "\n"
