"""Small deterministic SVG writer (no timestamps, fixed number formatting)."""

from __future__ import annotations

import math

import numpy as np

SIZE = 600
PAD = 20


def _f(v: float) -> str:
    return f"{v:.6g}"


class Canvas:
    """Maps data coordinates in [lo, hi] onto a square viewport, y up."""

    def __init__(self, lo, hi, size: int = SIZE):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        span = float(np.max(hi - lo)) or 1.0
        self.lo, self.span, self.size = lo, span, size
        self.items: list[str] = []

    def xy(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, float))
        s = (self.size - 2 * PAD) / self.span
        return np.column_stack([PAD + (p[:, 0] - self.lo[0]) * s,
                                self.size - PAD - (p[:, 1] - self.lo[1]) * s])

    def _pts(self, pts) -> str:
        return " ".join(f"{_f(x)},{_f(y)}" for x, y in self.xy(pts))

    def polygon(self, loops, fill="none", stroke="black", width=1.0, opacity=1.0):
        d = " ".join("M " + self._pts(lp).replace(" ", " L ") + " Z" for lp in loops)
        self.items.append(f'<path d="{d}" fill="{fill}" fill-opacity="{_f(opacity)}" '
                          f'fill-rule="evenodd" stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def polyline(self, pts, stroke="red", width=1.0):
        self.items.append(f'<polyline points="{self._pts(pts)}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{_f(width)}"/>')

    def rect(self, lo, side, stroke="steelblue", width=0.3):
        (x0, y0), (x1, y1) = self.xy([lo, np.asarray(lo) + side])
        self.items.append(f'<rect x="{_f(x0)}" y="{_f(y1)}" width="{_f(x1 - x0)}" height="{_f(y0 - y1)}" '
                          f'fill="none" stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def circle(self, p, r=2.0, fill="black"):
        (x, y), = self.xy([p])
        self.items.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}"/>')

    def text(self, p, s, size=12):
        (x, y), = self.xy([p])
        self.items.append(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}">{s}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" height="{self.size}" '
                f'viewBox="0 0 {self.size} {self.size}">')
        return "\n".join([head, *self.items, "</svg>"]) + "\n"


def _bounds(*arrays):
    pts = np.vstack([np.atleast_2d(a) for a in arrays])
    return pts.min(0), pts.max(0)


def _color(t: float) -> str:
    """Blue to red ramp for t in [0, 1]."""
    t = min(max(t, 0.0), 1.0) if math.isfinite(t) else 0.0
    return f"rgb({int(255 * t)},0,{int(255 * (1 - t))})"


def sets_svg(layers) -> str:
    """``layers``: list of (loops, stroke colour)."""
    lo, hi = _bounds(*[lp for loops, _ in layers for lp in loops])
    c = Canvas(lo, hi)
    for loops, col in layers:
        c.polygon(loops, stroke=col)
    return c.render()


def whitney_svg(W, omega=None) -> str:
    lows, sides = W.lows(), W.sides()
    lo, hi = _bounds(lows, lows + sides[:, None])
    c = Canvas(lo, hi)
    for p, s in zip(lows, sides):
        c.rect(p, s)
    if omega is not None and omega.is_polygon:
        c.polygon(omega.loops, stroke="black", width=1.0)
    return c.render()


def john_svg(omega, curves, center=None) -> str:
    lo, hi = _bounds(*omega.loops)
    c = Canvas(lo, hi)
    c.polygon(omega.loops, fill="lightgray", opacity=0.5)
    for cv in curves:
        pts = cv["points"] if isinstance(cv, dict) else cv.points
        c.polyline(pts)
    if center is not None:
        c.circle(center, 3.0)
    return c.render()


def trace_svg(omega, samples) -> str:
    """Boundary samples rows (x, y, Tu) coloured by value."""
    s = np.asarray(samples, float)
    lo, hi = _bounds(*omega.loops)
    c = Canvas(lo, hi)
    c.polygon(omega.loops, stroke="gray")
    v = s[:, 2]
    a, b = float(np.nanmin(v)), float(np.nanmax(v))
    for x, y, t in s:
        c.circle((x, y), 2.0, _color((t - a) / (b - a) if b > a else 0.5))
    return c.render()


def scatter_svg(xs, ys, xlabel="param", ylabel="ratio") -> str:
    x = np.asarray(xs, float)
    y = np.asarray(ys, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) == 0:
        x, y = np.zeros(1), np.zeros(1)
    xr = (float(x.min()), float(x.max()))
    yr = (float(y.min()), float(y.max()))
    # normalize each axis into the unit square
    nx = (x - xr[0]) / ((xr[1] - xr[0]) or 1.0)
    ny = (y - yr[0]) / ((yr[1] - yr[0]) or 1.0)
    c = Canvas((-0.1, -0.1), (1.1, 1.1))
    c.polyline([[0, 0], [1, 0]], stroke="black")
    c.polyline([[0, 0], [0, 1]], stroke="black")
    for p in zip(nx, ny):
        c.circle(p, 3.0, "steelblue")
    c.text((0.0, -0.07), f"{xlabel} {_f(xr[0])}..{_f(xr[1])}")
    c.text((-0.08, 1.04), f"{ylabel} {_f(yr[0])}..{_f(yr[1])}")
    return c.render()
