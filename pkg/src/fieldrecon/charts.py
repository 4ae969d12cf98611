"""Minimal deterministic SVG charts (same input bytes in, same file out)."""

from __future__ import annotations

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 60, 16, 24, 44


def _fmt(v):
    return f"{v:.6g}"


def _path(xs, ys, xmap, ymap):
    pieces = []
    for i, (x, y) in enumerate(zip(xs, ys)):
        cmd = "M" if i == 0 else "L"
        pieces.append(f"{cmd}{_fmt(xmap(x))},{_fmt(ymap(y))}")
    return " ".join(pieces)


def line_chart(series, title, xlabel, ylabel, path):
    """Write a multi-series line chart.

    ``series`` is a list of (label, xs, ys). Axes are padded linear scales
    with five ticks; output is deterministic for identical input.
    """
    if not series:
        raise ValueError("no series to plot")
    all_x = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    all_y = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def xmap(x):
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def ymap(y):
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="16" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(6):
        ty = y0 + (y1 - y0) * i / 5
        py = ymap(ty)
        out.append(
            f'<line x1="{_ML}" y1="{_fmt(py)}" x2="{_W - _MR}" y2="{_fmt(py)}" '
            f'stroke="#dddddd"/>'
        )
        out.append(
            f'<text x="{_ML - 6}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(ty)}</text>'
        )
        tx = x0 + (x1 - x0) * i / 5
        px = xmap(tx)
        out.append(
            f'<text x="{_fmt(px)}" y="{_H - _MB + 16}" text-anchor="middle">{_fmt(tx)}</text>'
        )
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>'
    )
    out.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>')
    out.append(
        f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="14" y="{_H // 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H // 2})">{ylabel}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        out.append(
            f'<path d="{_path(xs, ys, xmap, ymap)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        ly = _MT + 16 + 16 * i
        out.append(
            f'<line x1="{_W - _MR - 150}" y1="{ly - 4}" x2="{_W - _MR - 126}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{_W - _MR - 120}" y="{ly}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def histogram(samples_by_label, title, xlabel, path, bins=12, lo=None, hi=None):
    """Overlaid step histograms for a few labelled samples."""
    labels = list(samples_by_label)
    if not labels:
        raise ValueError("no samples to plot")
    allv = np.concatenate([np.asarray(samples_by_label[k], float) for k in labels])
    lo = float(allv.min()) if lo is None else lo
    hi = float(allv.max()) if hi is None else hi
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    series = []
    for label in labels:
        counts, _ = np.histogram(np.asarray(samples_by_label[label], float), bins=edges)
        xs = np.repeat(edges, 2)[1:-1]
        ys = np.repeat(counts, 2)
        series.append((label, xs, ys))
    line_chart(series, title, xlabel, "count", path)
