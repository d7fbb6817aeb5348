"""SVG and CSV renderings of envelopes.

Polygons are written in data coordinates (MW, MVAr) under a single
transform, so every SVG polygon carries exactly the JSON boundary points.
"""

from __future__ import annotations

import csv
import io
import math

from .envelopes import Noe

PALETTE = ("#1f4e79", "#c0504d", "#4f8f3a", "#8064a2", "#d08a18", "#2c8c99", "#7f7f7f")
WIDTH, HEIGHT, MARGIN = 640, 480, 60


def _fmt(v: float) -> str:
    return repr(float(v))


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=mag * 10)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out


def svg(noes: list[tuple[str, Noe]], title: str = "", marker: tuple[float, float] | None = None) -> str:
    """Nested contours on shared P-Q axes; `marker` is the dispatch point in the plot frame."""
    pts = [pt for _, n in noes for pt in n.boundary.vertices]
    if marker is not None:
        pts.append(marker)
    if not pts:
        pts = [(0.0, 0.0)]
    ps = [p for p, _ in pts]
    qs = [q for _, q in pts]
    p_lo, p_hi = min(ps), max(ps)
    q_lo, q_hi = min(qs), max(qs)
    pad_p = 0.05 * (p_hi - p_lo or 1.0)
    pad_q = 0.05 * (q_hi - q_lo or 1.0)
    p_lo, p_hi, q_lo, q_hi = p_lo - pad_p, p_hi + pad_p, q_lo - pad_q, q_hi + pad_q
    sx = (WIDTH - 2 * MARGIN) / (p_hi - p_lo)
    sy = (HEIGHT - 2 * MARGIN) / (q_hi - q_lo)
    tx = MARGIN - p_lo * sx
    ty = HEIGHT - MARGIN + q_lo * sy

    def X(p):
        return tx + p * sx

    def Y(q):
        return ty - q * sy

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="15">{_esc(title)}</text>')
    x0, x1, y0, y1 = MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN
    out.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#333"/>')
    for t in _nice_ticks(p_lo, p_hi):
        out.append(f'<line x1="{X(t):.2f}" y1="{y1}" x2="{X(t):.2f}" y2="{y1 + 5}" stroke="#333"/>')
        out.append(f'<text x="{X(t):.2f}" y="{y1 + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{t:g}</text>')
    for t in _nice_ticks(q_lo, q_hi):
        out.append(f'<line x1="{x0 - 5}" y1="{Y(t):.2f}" x2="{x0}" y2="{Y(t):.2f}" stroke="#333"/>')
        out.append(f'<text x="{x0 - 8}" y="{Y(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{t:g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 14}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">active power import (MW)</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {HEIGHT / 2})">reactive power import (MVAr)</text>')
    # data-coordinate group: y flipped so MVAr grows upward
    out.append(f'<g transform="matrix({_fmt(sx)} 0 0 {_fmt(-sy)} {_fmt(tx)} {_fmt(ty)})">')
    for i, (label, n) in enumerate(noes):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(p)},{_fmt(q)}" for p, q in n.boundary.vertices)
        out.append(f'<polygon data-label="{_esc(label)}" points="{coords}" fill="{color}" fill-opacity="0.12" '
                   f'stroke="{color}" stroke-width="1.5" vector-effect="non-scaling-stroke"/>')
    out.append("</g>")
    if marker is not None:
        out.append(f'<circle cx="{X(marker[0]):.2f}" cy="{Y(marker[1]):.2f}" r="4" fill="black"/>')
    for i, (label, _) in enumerate(noes):
        color = PALETTE[i % len(PALETTE)]
        y = MARGIN + 16 + 16 * i
        out.append(f'<rect x="{x1 - 120}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{x1 - 105}" y="{y}" font-family="sans-serif" font-size="11">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def marker_for(noe: Noe) -> tuple[float, float] | None:
    if noe.frame == "deviation_from_dispatch":
        return (0.0, 0.0)
    d = noe.meta.get("dispatch_import")
    return None if d is None else (d[0], d[1])


def csv_rows(noes: list[tuple[str, Noe]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "vertex", "p_mw", "q_mvar"])
    for label, n in noes:
        for i, (p, q) in enumerate(n.boundary.vertices):
            w.writerow([label, i, repr(p), repr(q)])
    return buf.getvalue()


def svg_polygons(text: str) -> list[list[tuple[float, float]]]:
    """Parse polygon point lists back out of an SVG produced here."""
    import re

    out = []
    for m in re.finditer(r'<polygon[^>]*points="([^"]*)"', text):
        pts = []
        for pair in m.group(1).split():
            a, b = pair.split(",")
            pts.append((float(a), float(b)))
        out.append(pts)
    return out
