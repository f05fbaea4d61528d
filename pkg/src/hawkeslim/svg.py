"""Dependency-free SVG line/scatter plots for experiment outputs.

Deterministic by default: identical data yields byte-identical files
unless ``include_timestamp`` is set.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 62, 18, 34, 46


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    scatter: bool = False
    color: str | None = None


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    series: list = field(default_factory=list)
    logy: bool = False

    def add_line(self, x, y, label=""):
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label))

    def add_scatter(self, x, y, label=""):
        self.series.append(
            Series(np.asarray(x, float), np.asarray(y, float), label, scatter=True)
        )


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if m * mag >= raw:
            step = m * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def render(fig: Figure, include_timestamp: bool = False) -> str:
    xs = [s.x for s in fig.series if s.x.size]
    ys = [s.y for s in fig.series if s.y.size]
    if xs:
        xlo = min(float(np.nanmin(x)) for x in xs)
        xhi = max(float(np.nanmax(x)) for x in xs)
    else:
        xlo, xhi = 0.0, 1.0
    if ys:
        yvals = np.concatenate(ys)
        yvals = yvals[np.isfinite(yvals)]
        if fig.logy:
            yvals = yvals[yvals > 0]
        if yvals.size == 0:
            yvals = np.array([0.0, 1.0])
        if fig.logy:
            yvals = np.log10(yvals)
        ylo, yhi = float(yvals.min()), float(yvals.max())
    else:
        ylo, yhi = 0.0, 1.0
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    pad = 0.04 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def py(v):
        if fig.logy:
            v = np.log10(np.maximum(v, 1e-300))
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if include_timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        parts.append(f"<!-- generated {stamp} -->")
    # axes box
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#333"/>'
    )
    for tv in _ticks(xlo, xhi):
        X = px(tv)
        parts.append(
            f'<line x1="{X:.1f}" y1="{_H - _MB}" x2="{X:.1f}" y2="{_H - _MB + 4}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{X:.1f}" y="{_H - _MB + 17}" text-anchor="middle">{_fmt(tv)}</text>'
        )
    for tv in _ticks(ylo, yhi):
        Y = _H - _MB - (tv - ylo) / (yhi - ylo) * (_H - _MT - _MB)
        label = _fmt(10.0 ** tv) if fig.logy else _fmt(tv)
        parts.append(
            f'<line x1="{_ML - 4}" y1="{Y:.1f}" x2="{_ML}" y2="{Y:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_ML - 7}" y="{Y + 4:.1f}" text-anchor="end">{label}</text>'
        )
    if fig.title:
        parts.append(
            f'<text x="{_W / 2}" y="{_MT - 12}" text-anchor="middle" '
            f'font-size="14">{_esc(fig.title)}</text>'
        )
    if fig.xlabel:
        parts.append(
            f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 8}" text-anchor="middle">'
            f"{_esc(fig.xlabel)}</text>"
        )
    if fig.ylabel:
        parts.append(
            f'<text x="14" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2})">{_esc(fig.ylabel)}</text>'
        )
    for i, s in enumerate(fig.series):
        color = s.color or _PALETTE[i % len(_PALETTE)]
        ok = np.isfinite(s.x) & np.isfinite(s.y)
        if fig.logy:
            ok &= s.y > 0
        X, Y = s.x[ok], s.y[ok]
        if s.scatter:
            for xv, yv in zip(X, Y):
                parts.append(
                    f'<circle cx="{px(xv):.1f}" cy="{py(yv):.1f}" r="3" fill="{color}"/>'
                )
        elif X.size:
            pts = " ".join(f"{px(xv):.1f},{py(yv):.1f}" for xv, yv in zip(X, Y))
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
    labeled = [s for s in fig.series if s.label]
    if labeled:
        ly = _MT + 10
        for i, s in enumerate(fig.series):
            if not s.label:
                continue
            color = s.color or _PALETTE[i % len(_PALETTE)]
            parts.append(
                f'<line x1="{_W - _MR - 120}" y1="{ly}" x2="{_W - _MR - 96}" '
                f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
            )
            parts.append(f'<text x="{_W - _MR - 90}" y="{ly + 4}">{_esc(s.label)}</text>')
            ly += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, fig: Figure, include_timestamp: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(render(fig, include_timestamp=include_timestamp))
