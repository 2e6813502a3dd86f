"""Surface tensions, Wulff shapes and their gauge bounds.

A Wulff shape is stored as the vertex set of a convex polytope containing the
origin.  Its surface tension is the support function
``y -> max_v v . y``, evaluated as a max over the vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.spatial import QhullError

from .errors import EmptyShape, GaugeRatioExceeded, InvalidInput, UnboundedShape

UNIT_TOL = 1e-12


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True, eq=False)
class TensionSpec:
    """Sampled values of a surface tension on unit directions."""

    directions: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if d.ndim != 2 or d.shape[1] != self.dim or self.dim < 2:
            raise InvalidInput(f"directions must have shape (m, {self.dim})")
        if d.shape[0] != v.shape[0]:
            raise InvalidInput("one value per direction required")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > UNIT_TOL):
            raise InvalidInput("tension directions must be unit vectors")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInput("tension values must be finite and positive")
        d.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, fn, directions):
        d = np.asarray(directions, dtype=float)
        return cls(d, np.array([fn(u) for u in d]), d.shape[1])


@dataclass(frozen=True, eq=False)
class WulffShape:
    """Convex polytope K with the origin in its interior.

    ``vertices`` is counterclockwise for n = 2.  ``normals``/``offsets``
    describe the facets as ``normals @ x <= offsets`` with unit normals.
    """

    vertices: np.ndarray
    volume: float
    m_K: float
    M_K: float
    normals: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def ratio(self) -> float:
        return self.M_K / self.m_K

    def support(self, y) -> np.ndarray | float:
        return support_value(self, y)

    def gauge(self, x) -> np.ndarray | float:
        """Minkowski gauge: the smallest t >= 0 with x in tK."""
        x = np.asarray(x, dtype=float)
        g = np.max(x @ (self.normals / self.offsets[:, None]).T, axis=-1)
        return np.maximum(g, 0.0)

    def scaled(self, t: float) -> "WulffShape":
        return _shape_from_points(self.vertices * t)

    def translated(self, x) -> np.ndarray:
        """Vertices of x + K (translates are not Wulff shapes themselves)."""
        return self.vertices + np.asarray(x, dtype=float)

    @property
    def barycenter(self) -> np.ndarray:
        return _barycenter(self.vertices)


def support_value(K: WulffShape, y):
    """``sup_{x in K} x . y``; accepts a single vector or a stack of them."""
    y = np.asarray(y, dtype=float)
    return np.max(y @ K.vertices.T, axis=-1)


def _hull(points: np.ndarray) -> ConvexHull:
    try:
        return ConvexHull(points)
    except QhullError as exc:
        raise EmptyShape(f"point set has no interior: {exc}".splitlines()[0]) from None


def _shape_from_points(points, allow_offset: bool = False) -> WulffShape:
    pts = np.asarray(points, dtype=float)
    hull = _hull(pts)
    verts = pts[hull.vertices]
    if pts.shape[1] == 2:
        # qhull returns 2-D hull vertices in counterclockwise order
        area = 0.5 * np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1])
        if area < 0:
            verts = verts[::-1]
    normals, offsets = _dedupe_facets(hull.equations)
    if np.any(offsets <= 0) and not allow_offset:
        raise EmptyShape("origin is not interior to the polytope")
    m_K, M_K = _gauge_bounds(verts, offsets)
    verts.setflags(write=False)
    return WulffShape(verts, float(hull.volume), m_K, M_K, normals, offsets)


def _dedupe_facets(equations: np.ndarray):
    # qhull triangulates 3-D facets; coplanar triangles repeat the same plane
    eq = np.round(equations, 12)
    _, idx = np.unique(eq, axis=0, return_index=True)
    eq = equations[np.sort(idx)]
    return eq[:, :-1].copy(), -eq[:, -1].copy()


def _gauge_bounds(verts, offsets):
    return float(np.min(offsets)), float(np.max(np.linalg.norm(verts, axis=1)))


def _barycenter(verts: np.ndarray) -> np.ndarray:
    if verts.shape[1] == 2:
        x, y = verts[:, 0], verts[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = cr.sum() / 2
        return np.array([np.sum((x + xn) * cr), np.sum((y + yn) * cr)]) / (6 * a)
    hull = ConvexHull(verts)
    ref = verts.mean(axis=0)
    tets = verts[hull.simplices]
    vols = np.abs(np.einsum("ij,ij->i", tets[:, 0] - ref, np.cross(tets[:, 1] - ref, tets[:, 2] - ref))) / 6
    cents = (tets.sum(axis=1) + ref) / 4
    return (vols[:, None] * cents).sum(axis=0) / vols.sum()


def polygon_shape(vertices, allow_offset: bool = False) -> WulffShape:
    """Wulff shape from explicit vertices (must contain the origin).

    ``allow_offset`` accepts a raw body anywhere in space; only
    ``normalize_shape`` should consume such a shape, since its gauge data
    is meaningless until the barycenter is moved to the origin.
    """
    return _shape_from_points(vertices, allow_offset)


def wulff_from_tension(T: TensionSpec) -> WulffShape:
    """Intersect the half-spaces ``{x : x . nu <= value}`` over all samples.

    The result is not normalized.
    """
    d, v = T.directions, T.values
    # positive spanning <=> origin strictly inside conv(directions)
    try:
        dh = ConvexHull(d)
    except QhullError:
        raise UnboundedShape("tension directions are degenerate") from None
    if not np.all(dh.equations[:, -1] < -1e-12):
        raise UnboundedShape("tension directions do not positively span R^n")
    halfspaces = np.hstack([d, -v[:, None]])
    try:
        hs = HalfspaceIntersection(halfspaces, np.zeros(T.dim))
    except QhullError:
        raise EmptyShape("half-space intersection has no interior") from None
    pts = hs.intersections
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    return _shape_from_points(pts)


def normalize_shape(K_raw: WulffShape) -> WulffShape:
    """Center the barycenter at the origin and rescale to |K| = |B_1|.

    Raises GaugeRatioExceeded when the result violates M_K / m_K <= n.
    """
    n = K_raw.dim
    verts = K_raw.vertices - _barycenter(K_raw.vertices)
    t = (unit_ball_volume(n) / K_raw.volume) ** (1.0 / n)
    K = _shape_from_points(verts * t)
    if K.M_K > n * K.m_K * (1 + 1e-12):
        raise GaugeRatioExceeded(K.m_K, K.M_K, n)
    return K


def mk_Mk(K: WulffShape) -> tuple[float, float]:
    """Exact min/max of the support function over unit directions."""
    return K.m_K, K.M_K


def equispaced_directions(m: int = 360, phase: float = 0.0) -> np.ndarray:
    th = phase + 2 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(th), np.sin(th)])


def icosphere_directions(subdivisions: int = 4) -> np.ndarray:
    """Unit vectors of a subdivided icosahedron; 2562 points at 4 subdivisions."""
    p = (1 + 5 ** 0.5) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts)


def default_directions(n: int) -> np.ndarray:
    if n == 2:
        return equispaced_directions(360)
    if n == 3:
        return icosphere_directions(4)
    raise InvalidInput("only n = 2, 3 are supported")


def regular_polygon(m: int, circumradius: float = 1.0, phase: float = 0.0) -> WulffShape:
    th = phase + 2 * np.pi * np.arange(m) / m
    return polygon_shape(circumradius * np.column_stack([np.cos(th), np.sin(th)]))


def disc(m: int = 1024) -> WulffShape:
    """Normalized regular m-gon standing in for the Euclidean unit disc."""
    return normalize_shape(regular_polygon(m))


def box_shape(half_widths: Sequence[float]) -> WulffShape:
    h = np.asarray(half_widths, dtype=float)
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * len(h), indexing="ij")).reshape(len(h), -1).T
    return polygon_shape(corners * h)
