"""Self-contained SVG figures: trajectory overlays and simple line charts.

No plotting dependency; the output is a plain SVG string with the run's
config hash embedded as an XML comment so artifacts stay attributable.
"""

from __future__ import annotations

import numpy as np

_W, _H = 720, 540
_MARGIN = 50


def _color(i: int, n: int) -> str:
    hue = int(360 * i / max(n, 1))
    return f"hsl({hue},65%,45%)"


class _Frame:
    """Maps data coordinates onto the SVG viewport."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        self.x0, self.x1 = float(xs.min()), float(xs.max())
        self.y0, self.y1 = float(ys.min()), float(ys.max())
        for attr in ("x", "y"):
            lo, hi = getattr(self, attr + "0"), getattr(self, attr + "1")
            pad = 0.05 * (hi - lo) if hi > lo else max(abs(hi), 1.0) * 0.1
            setattr(self, attr + "0", lo - pad)
            setattr(self, attr + "1", hi + pad)

    def px(self, x):
        return _MARGIN + (x - self.x0) / (self.x1 - self.x0) * (_W - 2 * _MARGIN)

    def py(self, y):
        return _H - _MARGIN - (y - self.y0) / (self.y1 - self.y0) * (_H - 2 * _MARGIN)


def _axes(frame: _Frame, xlabel: str, ylabel: str, title: str) -> list:
    parts = [
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#444"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{_W / 2:.0f}" y="{_H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H / 2:.0f})">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = frame.x0 + frac * (frame.x1 - frame.x0)
        yv = frame.y0 + frac * (frame.y1 - frame.y0)
        parts.append(f'<text x="{frame.px(xv):.1f}" y="{_H - _MARGIN + 16}" '
                     f'text-anchor="middle" font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{_MARGIN - 6}" y="{frame.py(yv):.1f}" '
                     f'text-anchor="end" font-size="10">{yv:.3g}</text>')
    return parts


def _document(body: list, meta: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">')
    comment = f"<!-- {meta} -->" if meta else ""
    return "\n".join([head, comment,
                      f'<rect width="{_W}" height="{_H}" fill="white"/>']
                     + body + ["</svg>"]) + "\n"


def _polyline(xs, ys, frame, color, width=1.0, opacity=1.0) -> str:
    pts = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y in zip(xs, ys))
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>')


def trajectory_svg(curves, markers=None, title="", xlabel="x", ylabel="y",
                   meta: str = "") -> str:
    """Overlay 2D curves (list of (M, 2) arrays) with optional marker sets.

    markers: list of (points (n, 2), color, radius) triples drawn on top.
    """
    xs = np.concatenate([np.asarray(c)[:, 0] for c in curves]
                        + [np.asarray(m[0])[:, 0] for m in markers or []])
    ys = np.concatenate([np.asarray(c)[:, 1] for c in curves]
                        + [np.asarray(m[0])[:, 1] for m in markers or []])
    frame = _Frame(xs, ys)
    body = _axes(frame, xlabel, ylabel, title)
    for i, c in enumerate(curves):
        c = np.asarray(c)
        body.append(_polyline(c[:, 0], c[:, 1], frame,
                              _color(i, len(curves)), width=1.2, opacity=0.75))
    for pts, color, radius in markers or []:
        for p in np.asarray(pts):
            body.append(f'<circle cx="{frame.px(p[0]):.2f}" cy="{frame.py(p[1]):.2f}" '
                        f'r="{radius}" fill="{color}"/>')
    return _document(body, meta)


def line_chart_svg(series, title="", xlabel="", ylabel="", meta: str = "") -> str:
    """Simple chart: series = list of (label, xs, ys)."""
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    frame = _Frame(xs, ys)
    body = _axes(frame, xlabel, ylabel, title)
    for i, (label, sx, sy) in enumerate(series):
        color = _color(i, len(series))
        body.append(_polyline(sx, sy, frame, color, width=1.8))
        for x, y in zip(sx, sy):
            body.append(f'<circle cx="{frame.px(x):.2f}" cy="{frame.py(y):.2f}" '
                        f'r="3" fill="{color}"/>')
        body.append(f'<text x="{_W - _MARGIN - 8}" y="{_MARGIN + 16 + 14 * i}" '
                    f'text-anchor="end" font-size="11" fill="{color}">{label}</text>')
    return _document(body, meta)
