"""Deterministic standalone SVG 1.1 charts.

Every chart is a pure function of its spec: fixed canvas, fixed number
formatting, no timestamps or random ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 420
ML, MR, MT, MB = 60, 20, 40, 50
PALETTE = ("#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3",
           "#937860", "#DA8BC3", "#8C8C8C", "#CCB974", "#64B5CD")


def f(x: float) -> str:
    """Fixed 3-decimal coordinate formatting ('-0' normalized)."""
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def default_bins(n: int) -> int:
    return max(1, min(30, math.ceil(math.sqrt(n)))) if n > 0 else 1


@dataclass
class PlotSpec:
    kind: str  # histogram | box | bar | pie | heatmap | line | scatter
    title: str = ""
    values: Sequence[float] = ()
    labels: Sequence[str] = ()
    counts: Sequence[float] = ()
    matrix: Sequence[Sequence[float]] | None = None
    x: Sequence[float] = ()
    series: dict[str, Sequence[float]] = field(default_factory=dict)
    groups: Sequence[str] = ()
    bins: int | None = None
    xlabel: str = ""
    ylabel: str = ""


def _doc(title: str, body: list[str]) -> str:
    head = ('<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
            '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">\n'
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>\n'
            f'<text x="{W // 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">'
            f'{escape(title)}</text>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _axes(xlabel: str, ylabel: str) -> list[str]:
    x0, y0, x1, y1 = ML, H - MB, W - MR, MT
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000000"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000000"/>']
    if xlabel:
        out.append(f'<text x="{(x0 + x1) // 2}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 16 {(y0 + y1) // 2})">{escape(ylabel)}</text>')
    return out


def _scale(lo: float, hi: float, a: float, b: float):
    if hi == lo:
        return lambda v: (a + b) / 2.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _tick_labels(lo: float, hi: float, vertical: bool) -> list[str]:
    out = []
    for i in range(5):
        v = lo + (hi - lo) * i / 4 if hi != lo else lo
        if vertical:
            y = (H - MB) - i * (H - MB - MT) / 4
            out.append(f'<text x="{ML - 6}" y="{f(y + 4)}" text-anchor="end" font-family="sans-serif" '
                       f'font-size="10">{_g(v)}</text>')
        else:
            x = ML + i * (W - ML - MR) / 4
            out.append(f'<text x="{f(x)}" y="{H - MB + 16}" text-anchor="middle" font-family="sans-serif" '
                       f'font-size="10">{_g(v)}</text>')
    return out


def _g(v: float) -> str:
    return f"{v:.4g}"


def histogram_counts(values: Sequence[float], bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    k = bins or default_bins(len(v))
    if len(v) == 0:
        return np.zeros(k, dtype=int), np.linspace(0, 1, k + 1)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=k, range=(lo, hi))
    return counts, edges


def _histogram(spec: PlotSpec) -> list[str]:
    counts, edges = histogram_counts(spec.values, spec.bins)
    sx = _scale(edges[0], edges[-1], ML, W - MR)
    sy = _scale(0, max(1, int(counts.max()) if len(counts) else 1), H - MB, MT)
    body = _axes(spec.xlabel, spec.ylabel or "count")
    body += _tick_labels(float(edges[0]), float(edges[-1]), vertical=False)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        x, y = sx(a), sy(c)
        body.append(f'<rect class="bin" x="{f(x)}" y="{f(y)}" width="{f(sx(b) - x)}" height="{f(H - MB - y)}" '
                    f'fill="{PALETTE[0]}" stroke="#ffffff" data-count="{int(c)}"/>')
    return body


def _box(spec: PlotSpec) -> list[str]:
    from .tabular.eda import quantile  # local import: eda depends on this module
    v = sorted(x for x in spec.values if not math.isnan(x))
    body = _axes(spec.xlabel, spec.ylabel)
    if not v:
        return body
    q1, med, q3 = quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)
    iqr = q3 - q1
    lo_f, hi_f = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [x for x in v if lo_f <= x <= hi_f]
    wlo, whi = min(inside), max(inside)
    lo, hi = v[0], v[-1]
    body += _tick_labels(lo, hi, vertical=True)
    sy = _scale(lo, hi, H - MB, MT)
    cx = (ML + W - MR) / 2
    bw = 120
    body.append(f'<line x1="{f(cx)}" y1="{f(sy(wlo))}" x2="{f(cx)}" y2="{f(sy(whi))}" stroke="#000000"/>')
    body.append(f'<rect class="box" x="{f(cx - bw / 2)}" y="{f(sy(q3))}" width="{bw}" '
                f'height="{f(sy(q1) - sy(q3))}" fill="{PALETTE[0]}" stroke="#000000"/>')
    body.append(f'<line class="median" x1="{f(cx - bw / 2)}" y1="{f(sy(med))}" x2="{f(cx + bw / 2)}" '
                f'y2="{f(sy(med))}" stroke="#000000" stroke-width="2"/>')
    for x in v:
        if x < lo_f or x > hi_f:
            body.append(f'<circle class="outlier" cx="{f(cx)}" cy="{f(sy(x))}" r="3" fill="none" stroke="#C44E52"/>')
    return body


def _bar(spec: PlotSpec) -> list[str]:
    counts = [float(c) for c in spec.counts]
    body = _axes(spec.xlabel, spec.ylabel)
    if not counts:
        return body
    lo = min(0.0, min(counts))
    hi = max(0.0, max(counts)) or 1.0
    sy = _scale(lo, hi, H - MB, MT)
    body += _tick_labels(lo, hi, vertical=True)
    n = len(counts)
    slot = (W - ML - MR) / n
    for i, (lab, c) in enumerate(zip(spec.labels, counts)):
        x = ML + i * slot + slot * 0.1
        top, bottom = sorted((sy(c), sy(0.0)))
        body.append(f'<rect class="bar" x="{f(x)}" y="{f(top)}" width="{f(slot * 0.8)}" height="{f(bottom - top)}" '
                    f'fill="{PALETTE[i % len(PALETTE)]}" data-value="{_g(c)}"/>')
        if n <= 40:
            body.append(f'<text x="{f(x + slot * 0.4)}" y="{H - MB + 14}" text-anchor="middle" '
                        f'font-family="sans-serif" font-size="9">{escape(str(lab))[:18]}</text>')
    return body


def pie_angles(counts: Sequence[float]) -> list[tuple[float, float]]:
    total = float(sum(counts))
    out, start = [], 0.0
    for c in counts:
        sweep = 360.0 * c / total if total > 0 else 0.0
        out.append((start, start + sweep))
        start += sweep
    return out


def _pie(spec: PlotSpec) -> list[str]:
    cx, cy, r = W / 2, (H + MT) / 2, min(W, H - MT) / 2 - 30
    body = []
    for i, ((a0, a1), lab) in enumerate(zip(pie_angles(spec.counts), spec.labels)):
        color = PALETTE[i % len(PALETTE)]
        if a1 - a0 >= 360.0 - 1e-9:
            body.append(f'<circle class="sector" cx="{f(cx)}" cy="{f(cy)}" r="{f(r)}" fill="{color}" '
                        f'data-start="{f(a0)}" data-end="{f(a1)}"/>')
        elif a1 > a0:
            p0 = (cx + r * math.sin(math.radians(a0)), cy - r * math.cos(math.radians(a0)))
            p1 = (cx + r * math.sin(math.radians(a1)), cy - r * math.cos(math.radians(a1)))
            large = 1 if a1 - a0 > 180 else 0
            body.append(f'<path class="sector" d="M {f(cx)} {f(cy)} L {f(p0[0])} {f(p0[1])} '
                        f'A {f(r)} {f(r)} 0 {large} 1 {f(p1[0])} {f(p1[1])} Z" fill="{color}" '
                        f'stroke="#ffffff" data-start="{f(a0)}" data-end="{f(a1)}"/>')
        body.append(f'<text x="{W - 150}" y="{60 + 16 * i}" font-family="sans-serif" font-size="11" '
                    f'fill="{color}">{escape(str(lab))[:24]}</text>')
    return body


def _heatmap(spec: PlotSpec) -> list[str]:
    m = spec.matrix or []
    n = len(m)
    body: list[str] = []
    if n == 0:
        return body
    size = min(W - 2 * ML, H - MT - MB) / n
    for i in range(n):
        for j in range(len(m[i])):
            v = m[i][j]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                color = "#dddddd"
                label = ""
            else:
                t = max(-1.0, min(1.0, float(v)))
                if t >= 0:
                    color = "#%02x%02x%02x" % (255, int(255 * (1 - t)), int(255 * (1 - t)))
                else:
                    color = "#%02x%02x%02x" % (int(255 * (1 + t)), int(255 * (1 + t)), 255)
                label = f"{float(v):.2f}"
            x, y = ML + j * size, MT + i * size
            body.append(f'<rect class="cell" x="{f(x)}" y="{f(y)}" width="{f(size)}" height="{f(size)}" '
                        f'fill="{color}" stroke="#ffffff"/>')
            if n <= 12 and label:
                body.append(f'<text x="{f(x + size / 2)}" y="{f(y + size / 2 + 4)}" text-anchor="middle" '
                            f'font-family="sans-serif" font-size="9">{label}</text>')
    if n <= 30:
        for i, lab in enumerate(spec.labels):
            body.append(f'<text x="{ML - 4}" y="{f(MT + i * size + size / 2 + 3)}" text-anchor="end" '
                        f'font-family="sans-serif" font-size="8">{escape(str(lab))[:14]}</text>')
    return body


def _line(spec: PlotSpec) -> list[str]:
    x = [float(v) for v in spec.x]
    body = _axes(spec.xlabel, spec.ylabel)
    ys = [v for s in spec.series.values() for v in s if not math.isnan(v)]
    if not x or not ys:
        return body
    sx = _scale(min(x), max(x), ML, W - MR)
    sy = _scale(min(ys), max(ys), H - MB, MT)
    body += _tick_labels(min(ys), max(ys), vertical=True) + _tick_labels(min(x), max(x), vertical=False)
    for k, (name, s) in enumerate(spec.series.items()):
        pts = " ".join(f"{f(sx(a))},{f(sy(b))}" for a, b in zip(x, s) if not math.isnan(b))
        color = PALETTE[k % len(PALETTE)]
        body.append(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{W - MR - 4}" y="{MT + 14 * (k + 1)}" text-anchor="end" font-family="sans-serif" '
                    f'font-size="10" fill="{color}">{escape(name)}</text>')
    return body


def _scatter(spec: PlotSpec) -> list[str]:
    x = [float(v) for v in spec.x]
    y = [float(v) for v in spec.values]
    body = _axes(spec.xlabel, spec.ylabel)
    if not x:
        return body
    sx = _scale(min(x), max(x), ML, W - MR)
    sy = _scale(min(y), max(y), H - MB, MT)
    groups = list(spec.groups) if spec.groups else [""] * len(x)
    order = sorted(set(groups))
    for a, b, g in zip(x, y, groups):
        color = PALETTE[order.index(g) % len(PALETTE)]
        body.append(f'<circle class="point" cx="{f(sx(a))}" cy="{f(sy(b))}" r="2.5" fill="{color}"/>')
    for k, g in enumerate(order):
        if g:
            body.append(f'<text x="{W - MR - 4}" y="{MT + 14 * (k + 1)}" text-anchor="end" font-family="sans-serif" '
                        f'font-size="10" fill="{PALETTE[k % len(PALETTE)]}">{escape(g)}</text>')
    return body


_RENDERERS = {"histogram": _histogram, "box": _box, "bar": _bar, "pie": _pie, "heatmap": _heatmap,
              "line": _line, "scatter": _scatter}


def svg_text(spec: PlotSpec) -> str:
    try:
        renderer = _RENDERERS[spec.kind]
    except KeyError:
        raise ValueError(f"unknown plot kind {spec.kind!r}") from None
    return _doc(spec.title, renderer(spec))


def render_svg(spec: PlotSpec, path: str | Path) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(svg_text(spec), encoding="utf-8")
    return str(p)
