"""Log-log convergence plot written directly as SVG."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .solver import ConvergenceReport

_COLORS = {"l2": "#1f77b4", "h1": "#2ca02c", "h2": "#d62728"}
_LABELS = {"l2": "L2 error", "h1": "H1 error", "h2": "broken H2 error"}


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def convergence_svg(report: ConvergenceReport, width: int = 640, height: int = 480,
                    slopes=(2.0,)) -> str:
    """Error curves against measured max h_K with reference-slope triangles."""
    h = np.array([r.h for r in report.rows])
    series = {k: np.array([getattr(r, k) for r in report.rows]) for k in ("l2", "h1", "h2")}
    vals = np.concatenate([v[v > 0] for v in series.values()])
    xd = _decades(h.min(), h.max())
    yd = _decades(vals.min(), vals.max())
    x0, x1 = 10.0 ** xd[0], 10.0 ** xd[-1]
    y0, y1 = 10.0 ** yd[0], 10.0 ** yd[-1]
    ml, mr, mt, mb = 70, 150, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + pw * (math.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0))

    def Y(v):
        return mt + ph * (1.0 - (math.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml}" y="18">{escape(report.problem)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for d in xd:
        x = X(10.0**d)
        out.append(f'<line x1="{x:.1f}" y1="{mt}" x2="{x:.1f}" y2="{mt + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.1f}" y="{mt + ph + 18}" text-anchor="middle">1e{d}</text>')
    for d in yd:
        y = Y(10.0**d)
        out.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">h (max h_K)</text>')

    for i, (k, v) in enumerate(series.items()):
        pts = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(h, v) if b > 0)
        c = _COLORS[k]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        for a, b in zip(h, v):
            if b > 0:
                out.append(f'<circle cx="{X(a):.1f}" cy="{Y(b):.1f}" r="3" fill="{c}"/>')
        ly = mt + 20 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{c}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{_LABELS[k]}</text>')

    # slope triangles under the finest segment of the H2 curve
    if len(h) >= 2:
        ha, hb = h[-2], h[-1]
        e = series["h2"][-1] * 0.5
        for j, s in enumerate(slopes):
            xa, xb = X(hb), X(ha)
            ya = Y(e / 2.0**j)
            yb = Y(e / 2.0**j * (ha / hb) ** s)
            out.append(f'<polygon points="{xa:.1f},{ya:.1f} {xb:.1f},{ya:.1f} {xb:.1f},{yb:.1f}" '
                       f'fill="none" stroke="gray"/>')
            out.append(f'<text x="{xb + 4:.1f}" y="{(ya + yb) / 2:.1f}" fill="gray">{s:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
