"""Minimal deterministic SVG charts (line, scatter, histogram, bars, 2x2 matrix).

Every chart uses an 800x600 viewport with linear axes.  Output depends only
on the inputs, so reruns produce byte-identical files.
"""
from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = dict(left=80, right=30, top=50, bottom=70)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
MAX_POINTS = 2000


def _nice_ticks(lo, hi, n=6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 0.5 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v):
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e5 or a < 1e-3:
        return f"{v:.1e}"
    return f"{v:.6g}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
            f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="18" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 18 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>',
        ]

    @property
    def plot_box(self):
        return MARGIN["left"], MARGIN["top"], WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]

    def px(self, x):
        l, _, r, _ = self.plot_box
        return l + (x - self.x0) / (self.x1 - self.x0) * (r - l)

    def py(self, y):
        _, t, _, b = self.plot_box
        return b - (y - self.y0) / (self.y1 - self.y0) * (b - t)

    def axes(self, xticks=True):
        l, t, r, b = self.plot_box
        p = self.parts
        p.append(f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="black"/>')
        if xticks:
            for v in _nice_ticks(self.x0, self.x1):
                if self.x0 <= v <= self.x1:
                    x = self.px(v)
                    p.append(f'<line x1="{x:.2f}" y1="{b}" x2="{x:.2f}" y2="{b + 5}" stroke="black"/>')
                    p.append(f'<text x="{x:.2f}" y="{b + 20}" text-anchor="middle">{_fmt(v)}</text>')
        for v in _nice_ticks(self.y0, self.y1):
            if self.y0 <= v <= self.y1:
                y = self.py(v)
                p.append(f'<line x1="{l - 5}" y1="{y:.2f}" x2="{l}" y2="{y:.2f}" stroke="black"/>')
                p.append(f'<text x="{l - 8}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')

    def legend(self, labels, colors=None):
        l, t, _, _ = self.plot_box
        for k, label in enumerate(labels):
            y = t + 15 + 18 * k
            c = PALETTE[(k if colors is None else colors[k]) % len(PALETTE)]
            self.parts.append(f'<rect x="{l + 10}" y="{y - 9}" width="12" height="12" fill="{c}"/>')
            self.parts.append(f'<text x="{l + 28}" y="{y + 1}">{escape(label)}</text>')

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("\n".join(self.parts + ["</svg>"]) + "\n")


def _limits(arrays, pad=0.03, zero=False):
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    if zero:
        lo = min(lo, 0.0)
    span = hi - lo or 1.0
    return lo - pad * span * (not zero), hi + pad * span


def _thin(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) <= MAX_POINTS:
        return x, y
    idx = np.unique(np.r_[np.linspace(0, len(x) - 1, MAX_POINTS).astype(int), np.argmax(y)])
    return x[idx], y[idx]


def line_chart(path, series, title="", xlabel="", ylabel="", dashed=(), colors=None):
    """``series`` is a list of ``(label, x, y)``; labels listed in ``dashed`` draw dashed.

    ``colors`` optionally gives a palette index per series.
    """
    series = [(label, *_thin(x, y)) for label, x, y in series]
    c = _Canvas(title, xlabel, ylabel, _limits([s[1] for s in series], pad=0),
                _limits([s[2] for s in series], zero=True))
    c.axes()
    for k, (label, x, y) in enumerate(series):
        pts = " ".join(f"{c.px(a):.2f},{c.py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6 4"' if label in dashed else ""
        col = PALETTE[(k if colors is None else colors[k]) % len(PALETTE)]
        c.parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"{dash}/>')
    c.legend([s[0] for s in series], colors)
    c.save(path)


def scatter_chart(path, groups, title="", xlabel="", ylabel="", diagonal=True):
    """``groups`` is a list of ``(label, x, y)``; optional y = x reference line."""
    allv = [np.asarray(g[1]) for g in groups] + [np.asarray(g[2]) for g in groups]
    lim = _limits(allv)
    c = _Canvas(title, xlabel, ylabel, lim, lim)
    c.axes()
    if diagonal:
        c.parts.append(f'<line x1="{c.px(lim[0]):.2f}" y1="{c.py(lim[0]):.2f}" x2="{c.px(lim[1]):.2f}" '
                       f'y2="{c.py(lim[1]):.2f}" stroke="gray" stroke-dasharray="4 4"/>')
    for k, (_, x, y) in enumerate(groups):
        col = PALETTE[k % len(PALETTE)]
        for a, b in zip(x, y):
            c.parts.append(f'<circle cx="{c.px(a):.2f}" cy="{c.py(b):.2f}" r="2.5" fill="{col}" fill-opacity="0.6"/>')
    c.legend([g[0] for g in groups])
    c.save(path)


def histogram(path, values, bins=30, title="", xlabel="", ylabel="count"):
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    c = _Canvas(title, xlabel, ylabel, (float(edges[0]), float(edges[-1])), (0.0, float(counts.max()) * 1.05))
    c.axes()
    for n, a, b in zip(counts, edges[:-1], edges[1:]):
        x, w = c.px(a), c.px(b) - c.px(a)
        y = c.py(n)
        c.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{c.py(0) - y:.2f}" '
                       f'fill="{PALETTE[0]}" stroke="white"/>')
    c.parts.append(f'<text x="{WIDTH - 40}" y="70" text-anchor="end">mean = {_fmt(float(values.mean()))}</text>')
    c.save(path)


def bar_chart(path, categories, groups, title="", ylabel=""):
    """Grouped bars: ``groups`` maps a legend label to one value per category.

    Negative values are drawn at zero height.
    """
    labels = list(groups)
    vals = np.array([groups[k] for k in labels], dtype=float)
    top = max(float(vals.max()), 0.0) * 1.1 or 1.0
    c = _Canvas(title, "", ylabel, (0.0, float(len(categories))), (0.0, top))
    c.axes(xticks=False)
    width = 0.8 / len(labels)
    for g, label in enumerate(labels):
        for k, v in enumerate(vals[g]):
            x = c.px(k + 0.1 + g * width)
            y = c.py(max(v, 0.0))
            c.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{c.px(width) - c.px(0):.2f}" '
                           f'height="{c.py(0) - y:.2f}" fill="{PALETTE[g % len(PALETTE)]}"/>')
    _, _, _, b = c.plot_box
    for k, name in enumerate(categories):
        c.parts.append(f'<text x="{c.px(k + 0.5):.2f}" y="{b + 20}" text-anchor="middle">{escape(str(name))}</text>')
    c.legend(labels)
    c.save(path)


def matrix_chart(path, matrix, title="", row_label="actual", col_label="predicted"):
    """2x2 (or any small) count matrix drawn as shaded cells."""
    m = np.asarray(matrix)
    rows, cols = m.shape
    c = _Canvas(title, col_label, row_label, (0.0, float(cols)), (0.0, float(rows)))
    peak = max(int(m.max()), 1)
    for r in range(rows):
        for k in range(cols):
            shade = int(255 - 200 * m[r, k] / peak)
            x0, x1 = c.px(k), c.px(k + 1)
            y0, y1 = c.py(rows - r), c.py(rows - r - 1)
            c.parts.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                           f'fill="rgb({shade},{shade},255)" stroke="black"/>')
            c.parts.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{(y0 + y1) / 2 + 8:.2f}" text-anchor="middle" '
                           f'font-size="24">{int(m[r, k])}</text>')
    _, t, _, b = c.plot_box
    for k in range(cols):
        c.parts.append(f'<text x="{c.px(k + 0.5):.2f}" y="{b + 20}" text-anchor="middle">{k}</text>')
    for r in range(rows):
        c.parts.append(f'<text x="{MARGIN["left"] - 10}" y="{c.py(rows - r - 0.5) + 4:.2f}" text-anchor="end">{r}</text>')
    c.save(path)
