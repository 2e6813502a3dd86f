"""Brute-force reference computations used to cross-check the fast paths.

None of these share code with the routines they check beyond the basic
polygon area evaluation.
"""

from __future__ import annotations

import itertools

import numpy as np
import shapely

from .anisotropy import WulffShape
from .geomset import GeomSet, scanline_mask


def halfplane_intersection(directions, values, tol=1e-12) -> np.ndarray:
    """Vertices of {x : d_i . x <= v_i for all i} by enumerating line pairs.

    O(m^3); only for small m.
    """
    d = np.asarray(directions, float)
    v = np.asarray(values, float)
    pts = []
    for i, j in itertools.combinations(range(len(d)), 2):
        M = np.array([d[i], d[j]])
        det = np.linalg.det(M)
        if abs(det) < 1e-14:
            continue
        p = np.linalg.solve(M, [v[i], v[j]])
        if np.all(d @ p <= v + tol * (1 + np.abs(v))):
            pts.append(p)
    pts = np.array(pts)
    c = pts.mean(0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    pts = pts[np.argsort(ang)]
    keep = [0]
    for k in range(1, len(pts)):
        if np.linalg.norm(pts[k] - pts[keep[-1]]) > 1e-9:
            keep.append(k)
    return pts[keep]


def hausdorff(P, Q) -> float:
    """Hausdorff distance between two convex polygons given as vertex arrays."""
    a, b = shapely.Polygon(P), shapely.Polygon(Q)
    return float(shapely.hausdorff_distance(a.exterior, b.exterior, densify=0.01))


def rasterized_symdiff(E: GeomSet, F: GeomSet, h: float) -> float:
    lo = np.minimum(E.bounds()[0], F.bounds()[0]) - 2 * h
    hi = np.maximum(E.bounds()[1], F.bounds()[1]) + 2 * h
    dims = tuple(int(v) for v in np.ceil((hi - lo) / h))
    a = scanline_mask(E, h, lo, dims)
    b = scanline_mask(F, h, lo, dims)
    return float(np.count_nonzero(a ^ b)) * h * h


def brute_force_asymmetry(E: GeomSet, K: WulffShape, step: float, center=None, half_width=None):
    """Exhaustive grid minimization of |E Δ (x + K)|.

    Searches the square window ``center +- half_width`` (default: the
    barycenter of E and half a unit of |K|^(1/2)) at spacing ``step``.
    Returns ``(value, x, on_edge)``; ``on_edge`` flags a minimizer on the
    window boundary.
    """
    s = K.volume ** 0.5
    c = np.asarray(E.shapely.centroid.coords[0]) if center is None else np.asarray(center, float)
    hw = 0.5 * s if half_width is None else half_width
    k = int(np.ceil(hw / step))
    offs = np.arange(-k, k + 1) * step
    X = np.stack([g.ravel() for g in np.meshgrid(offs, offs, indexing="ij")], 1) + c
    geom = E.shapely
    kv = K.vertices
    best = (np.inf, None)
    for i in range(0, len(X), 4096):
        polys = shapely.polygons(kv[None] + X[i:i + 4096, None, :])
        vals = shapely.area(shapely.symmetric_difference(geom, polys))
        j = int(np.argmin(vals))
        if vals[j] < best[0]:
            best = (float(vals[j]), X[i + j])
    on_edge = bool(np.any(np.abs(best[1] - c) >= k * step - 1e-12))
    return best[0], best[1], on_edge


def ball_average(fn, E: GeomSet, x, r: float, q: int = 200) -> float:
    """Average of fn over E ∩ B_r(x) by a q x q midpoint grid."""
    x = np.asarray(x, float)
    t = (np.arange(q) + 0.5) / q * 2 * r - r
    P = np.stack([g.ravel() for g in np.meshgrid(t, t, indexing="ij")], 1) + x
    inside = ((P - x) ** 2).sum(1) <= r * r
    inside &= E.contains(P)
    vals = fn(P[inside])
    return float(vals.mean())
