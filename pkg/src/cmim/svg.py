"""Minimal deterministic SVG writer for scatter plots, histograms, bars and strip plots.

Output depends only on the input numbers, so figures are byte-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")


def _n(v: float) -> str:
    return f"{float(v):.3f}".rstrip("0").rstrip(".")


@dataclass
class Panel:
    """A plotting rectangle with data-to-pixel transforms."""

    x0: float
    y0: float
    width: float
    height: float
    xlim: tuple
    ylim: tuple
    title: str = ""
    elements: list = field(default_factory=list)

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - lo) / ((hi - lo) or 1.0) * self.width

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.height - (np.asarray(y, dtype=float) - lo) / ((hi - lo) or 1.0) * self.height

    def frame(self, xlabel="", ylabel="") -> None:
        e = self.elements
        e.append(
            f'<rect x="{_n(self.x0)}" y="{_n(self.y0)}" width="{_n(self.width)}" '
            f'height="{_n(self.height)}" fill="none" stroke="#333"/>'
        )
        for v, anchor, x, y in (
            (self.xlim[0], "start", self.x0, self.y0 + self.height + 14),
            (self.xlim[1], "end", self.x0 + self.width, self.y0 + self.height + 14),
        ):
            e.append(_text(x, y, _n(v), anchor=anchor, size=10))
        e.append(_text(self.x0 - 4, self.y0 + self.height, _n(self.ylim[0]), anchor="end", size=10))
        e.append(_text(self.x0 - 4, self.y0 + 10, _n(self.ylim[1]), anchor="end", size=10))
        if self.title:
            e.append(_text(self.x0 + self.width / 2, self.y0 - 8, self.title, size=12))
        if xlabel:
            e.append(_text(self.x0 + self.width / 2, self.y0 + self.height + 28, xlabel, size=11))
        if ylabel:
            cx, cy = self.x0 - 30, self.y0 + self.height / 2
            e.append(
                f'<text x="{_n(cx)}" y="{_n(cy)}" font-size="11" text-anchor="middle" '
                f'transform="rotate(-90 {_n(cx)} {_n(cy)})">{escape(ylabel)}</text>'
            )


def _text(x, y, s, anchor="middle", size=11) -> str:
    return f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}">{escape(str(s))}</text>'


def _limits(values, pad=0.05, include_zero=False):
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if include_zero:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    span = hi - lo or 1.0
    return lo - pad * span, hi + pad * span


def document(panels, width, height, header="") -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" height="{_n(height)}" '
        f'viewBox="0 0 {_n(width)} {_n(height)}" font-family="sans-serif">',
        f'<rect width="{_n(width)}" height="{_n(height)}" fill="white"/>',
    ]
    if header:
        parts.append(_text(width / 2, 16, header, size=12))
    for p in panels:
        parts.extend(p.elements)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_panel(panel: Panel, x, y, color=PALETTE[0], radius=1.5) -> None:
    for a, b in zip(panel.px(x), panel.py(y)):
        panel.elements.append(f'<circle cx="{_n(a)}" cy="{_n(b)}" r="{_n(radius)}" fill="{color}" fill-opacity="0.6"/>')


def histogram_panel(panel: Panel, counts, edges, color=PALETTE[0]) -> None:
    counts = np.asarray(counts, dtype=float)
    base = panel.py(0.0)
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        xa, xb = panel.px(lo), panel.px(hi)
        top = panel.py(c)
        panel.elements.append(
            f'<rect x="{_n(xa)}" y="{_n(top)}" width="{_n(max(xb - xa, 0.0))}" '
            f'height="{_n(max(base - top, 0.0))}" fill="{color}" stroke="white" stroke-width="0.5"/>'
        )


def bar_chart(labels, means, errors, title="", ylabel="", header="") -> str:
    """Bars with symmetric error whiskers."""
    means = np.asarray(means, dtype=float)
    errors = np.asarray(errors, dtype=float)
    k = len(means)
    width = max(320, 60 * k + 120)
    lo, hi = _limits(np.concatenate([means - errors, means + errors]), include_zero=True)
    p = Panel(70, 40, width - 100, 220, (0, k), (lo, hi), title)
    p.frame(ylabel=ylabel)
    zero = p.py(0.0)
    for i, (m, e, lab) in enumerate(zip(means, errors, labels)):
        xa, xb = p.px(i + 0.15), p.px(i + 0.85)
        ym = p.py(m)
        top, h = (ym, zero - ym) if m >= 0 else (zero, ym - zero)
        p.elements.append(
            f'<rect x="{_n(xa)}" y="{_n(top)}" width="{_n(xb - xa)}" height="{_n(h)}" '
            f'fill="{PALETTE[i % len(PALETTE)]}"/>'
        )
        xc = p.px(i + 0.5)
        p.elements.append(
            f'<line x1="{_n(xc)}" y1="{_n(p.py(m - e))}" x2="{_n(xc)}" y2="{_n(p.py(m + e))}" stroke="#000"/>'
        )
        p.elements.append(_text(xc, p.y0 + p.height + 14, lab, size=10))
    return document([p], width, 300, header)


def strip_plot(groups: dict, title="", ylabel="slope", header="") -> str:
    """One column of jittered points per group plus a mean tick and a zero line."""
    names = list(groups)
    allv = np.concatenate([np.asarray(groups[g], dtype=float) for g in names])
    lo, hi = _limits(allv, include_zero=True)
    k = len(names)
    width = max(320, 90 * k + 120)
    p = Panel(70, 40, width - 100, 220, (0, k), (lo, hi), title)
    p.frame(ylabel=ylabel)
    z = p.py(0.0)
    p.elements.append(
        f'<line x1="{_n(p.x0)}" y1="{_n(z)}" x2="{_n(p.x0 + p.width)}" y2="{_n(z)}" '
        f'stroke="#999" stroke-dasharray="4 3"/>'
    )
    for i, g in enumerate(names):
        v = np.asarray(groups[g], dtype=float)
        # deterministic spread instead of random jitter
        offs = np.linspace(-0.25, 0.25, len(v)) if len(v) > 1 else np.zeros(1)
        scatter_panel(p, i + 0.5 + offs, v, PALETTE[i % len(PALETTE)], radius=2.5)
        xa, xb = p.px(i + 0.2), p.px(i + 0.8)
        ym = p.py(v.mean())
        p.elements.append(f'<line x1="{_n(xa)}" y1="{_n(ym)}" x2="{_n(xb)}" y2="{_n(ym)}" stroke="#000" stroke-width="2"/>')
        p.elements.append(_text(p.px(i + 0.5), p.y0 + p.height + 14, g, size=10))
    return document([p], width, 300, header)
