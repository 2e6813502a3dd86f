"""Discretized finite-perimeter sets.

Two representations are supported:

* polygon systems in the plane, a tuple of closed loops with outer loops
  counterclockwise and holes clockwise;
* voxel grids in 2-D or 3-D, a boolean mask with spacing ``h`` whose cell
  ``i`` covers ``origin + h * [i, i + 1]``.

Boolean operations on polygons go through GEOS (shapely) after snapping
vertices to a 1e-12 grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import shapely
from scipy import ndimage
from shapely.geometry import MultiPolygon, Polygon

from .anisotropy import WulffShape, support_value, unit_ball_volume
from .errors import InvalidInput, MixedRepresentation, ResolutionTooCoarse

SNAP = 1e-12
MESH_SIGMA = 1.5    # voxels; Gaussian pre-smoothing removes the staircase bias of level sets
DENSITY_LOW = 0.05
DENSITY_HIGH = 0.95


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    h: float
    origin: np.ndarray
    mask: np.ndarray

    @property
    def dims(self) -> tuple[int, ...]:
        return self.mask.shape

    def centers(self, index=None) -> np.ndarray:
        idx = np.argwhere(self.mask) if index is None else np.asarray(index)
        return self.origin + (idx + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class GeomSet:
    """A set E as polygon loops (``loops``) or a voxel grid (``voxels``)."""

    dim: int
    loops: tuple = ()
    voxels: VoxelGrid | None = None
    _meta: dict = field(default_factory=dict, compare=False, repr=False)

    # -- construction -------------------------------------------------
    @classmethod
    def polygon(cls, *loops) -> "GeomSet":
        arrs = []
        for lp in loops:
            a = np.array(lp, dtype=float)
            if a.ndim != 2 or a.shape[1] != 2 or len(a) < 3:
                raise InvalidInput("each loop needs >= 3 planar vertices")
            if np.allclose(a[0], a[-1]):
                a = a[:-1]
            a.setflags(write=False)
            arrs.append(a)
        if not arrs:
            raise InvalidInput("polygon needs at least one loop")
        E = cls(2, tuple(arrs))
        if E.signed_area_sum() <= 0:
            raise InvalidInput("outer loops must be counterclockwise, holes clockwise")
        return E

    @classmethod
    def from_voxels(cls, mask, h: float, origin=None) -> "GeomSet":
        m = np.asarray(mask, dtype=bool)
        if m.ndim not in (2, 3):
            raise InvalidInput("voxel grids must be 2-D or 3-D")
        if h <= 0:
            raise InvalidInput("voxel spacing must be positive")
        if not m.any():
            raise InvalidInput("voxel grid is empty")
        o = np.zeros(m.ndim) if origin is None else np.asarray(origin, dtype=float)
        m = m.copy()
        m.setflags(write=False)
        return cls(m.ndim, voxels=VoxelGrid(float(h), o, m))

    @classmethod
    def from_shape(cls, K: WulffShape, center=None, scale: float = 1.0) -> "GeomSet":
        c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
        if K.dim != 2:
            raise InvalidInput("polygon sets are planar; rasterize K for n = 3")
        return cls.polygon(K.vertices * scale + c)

    @property
    def is_polygon(self) -> bool:
        return self.voxels is None

    def signed_area_sum(self) -> float:
        return sum(_signed_area(lp) for lp in self.loops)

    # -- geometry helpers ---------------------------------------------
    @cached_property
    def shapely(self):
        if not self.is_polygon:
            raise MixedRepresentation("voxel sets have no polygon geometry")
        outers, holes = [], []
        for lp in self.loops:
            snapped = np.round(lp / SNAP) * SNAP
            (outers if _signed_area(lp) > 0 else holes).append(snapped)
        polys = []
        assigned = [[] for _ in outers]
        outer_geoms = [Polygon(o) for o in outers]
        for hl in holes:
            cands = [i for i, g in enumerate(outer_geoms) if g.covers(shapely.Point(hl[0]))]
            if not cands:
                raise InvalidInput("hole is not inside any outer loop")
            i = min(cands, key=lambda k: outer_geoms[k].area)
            assigned[i].append(hl)
        for o, hs in zip(outers, assigned):
            polys.append(Polygon(o, hs))
        geom = polys[0] if len(polys) == 1 else MultiPolygon(polys)
        shapely.prepare(geom)
        return geom

    @cached_property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of all polygon edges."""
        a = np.concatenate([lp for lp in self.loops])
        b = np.concatenate([np.roll(lp, -1, axis=0) for lp in self.loops])
        return a, b

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_polygon:
            pts = np.concatenate(self.loops)
            return pts.min(axis=0), pts.max(axis=0)
        c = self.voxels.centers()
        h = self.voxels.h
        return c.min(axis=0) - h / 2, c.max(axis=0) + h / 2

    def diameter(self) -> float:
        if self.is_polygon:
            pts = np.concatenate(self.loops)
        else:
            pts = self.voxels.centers()
        from scipy.spatial import ConvexHull

        hv = pts[ConvexHull(pts).vertices] if len(pts) > self.dim + 1 else pts
        d = np.sqrt(((hv[:, None, :] - hv[None, :, :]) ** 2).sum(-1))
        return float(d.max())

    @property
    def resolution(self) -> float:
        return 0.0 if self.is_polygon else self.voxels.h

    def translate(self, v) -> "GeomSet":
        v = np.asarray(v, dtype=float)
        if self.is_polygon:
            return GeomSet.polygon(*[lp + v for lp in self.loops])
        vx = self.voxels
        return GeomSet.from_voxels(vx.mask, vx.h, vx.origin + v)

    def scale(self, t: float) -> "GeomSet":
        if t <= 0:
            raise InvalidInput("scale factor must be positive")
        if self.is_polygon:
            return GeomSet.polygon(*[lp * t for lp in self.loops])
        vx = self.voxels
        return GeomSet.from_voxels(vx.mask, vx.h * t, vx.origin * t)

    def barycenter(self) -> np.ndarray:
        if self.is_polygon:
            return np.array(self.shapely.centroid.coords[0])
        return self.voxels.centers().mean(axis=0)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.is_polygon:
            return shapely.contains_xy(self.shapely, pts[:, 0], pts[:, 1])
        vx = self.voxels
        idx = np.floor((pts - vx.origin) / vx.h).astype(int)
        ok = np.all((idx >= 0) & (idx < np.array(vx.dims)), axis=1)
        out = np.zeros(len(pts), dtype=bool)
        out[ok] = vx.mask[tuple(idx[ok].T)]
        return out

    @cached_property
    def _segment_tree(self):
        a, b = self.segments
        return shapely.STRtree(shapely.linestrings(np.stack([a, b], 1)))

    def distance_to_boundary(self, pts) -> np.ndarray:
        """Euclidean distance from points to the polygon boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.is_polygon:
            raise MixedRepresentation("use voxel_distance for voxel sets")
        (i, _), d = self._segment_tree.query_nearest(shapely.points(pts), return_distance=True,
                                                     all_matches=False)
        out = np.full(len(pts), np.inf)
        np.minimum.at(out, i, d)
        return out

    def nearest_boundary_point(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        (i, k), _ = self._segment_tree.query_nearest(shapely.points(pts), return_distance=True,
                                                     all_matches=False)
        seg = np.empty(len(pts), dtype=np.int64)
        seg[i] = k
        a, b = self.segments
        a, b = a[seg], b[seg]
        d = b - a
        t = np.clip(((pts - a) * d).sum(1) / np.maximum((d * d).sum(1), 1e-300), 0.0, 1.0)
        return a + t[:, None] * d


def _point_segment_d2(p, a, b):
    d = b - a
    dd = (d * d).sum(-1)
    w = p[:, None, :] - a[None]
    t = np.clip((w * d[None]).sum(-1) / dd[None], 0.0, 1.0)
    r = w - t[..., None] * d[None]
    return (r * r).sum(-1)


# -- rasterization -----------------------------------------------------------

def rasterize(E: GeomSet, h: float, origin=None, dims=None) -> GeomSet:
    """Voxelize a polygon set by testing cell centers (even-odd scanlines)."""
    if not E.is_polygon:
        raise MixedRepresentation("already a voxel set")
    lo, hi = E.bounds()
    if origin is None:
        origin = np.floor(lo / h) * h - h
    origin = np.asarray(origin, dtype=float)
    if dims is None:
        dims = tuple(int(v) for v in np.ceil((hi - origin) / h) + 1)
    return GeomSet.from_voxels(scanline_mask(E, h, origin, dims), h, origin)


def scanline_mask(E: GeomSet, h: float, origin, dims) -> np.ndarray:
    a, b = E.segments
    nx, ny = dims
    xs = origin[0] + (np.arange(nx) + 0.5) * h
    ys = origin[1] + (np.arange(ny) + 0.5) * h
    mask = np.zeros((nx, ny), dtype=bool)
    y0, y1 = a[:, 1], b[:, 1]
    for j, y in enumerate(ys):
        hit = (y0 <= y) != (y1 <= y)
        if not hit.any():
            continue
        t = (y - y0[hit]) / (y1[hit] - y0[hit])
        xc = np.sort(a[hit, 0] + t * (b[hit, 0] - a[hit, 0]))
        # parity of crossings to the left of each cell center
        cnt = np.searchsorted(xc, xs, side="right")
        mask[:, j] = (cnt % 2) == 1
    return mask


# -- measures ----------------------------------------------------------------

def volume(E: GeomSet) -> float:
    """Lebesgue measure |E|."""
    if E.is_polygon:
        return float(E.signed_area_sum())
    return float(E.voxels.mask.sum()) * E.voxels.h ** E.dim


def _embed(E: GeomSet, F: GeomSet):
    """Place two voxel masks with equal spacing on a common index grid."""
    ve, vf = E.voxels, F.voxels
    if ve.h != vf.h:
        raise InvalidInput("voxel sets need equal spacing")
    h = ve.h
    off = (vf.origin - ve.origin) / h
    if not np.allclose(off, np.round(off), atol=1e-9):
        raise InvalidInput("voxel grids are not aligned")
    off = np.round(off).astype(int)
    lo = np.minimum(0, off)
    hi = np.maximum(np.array(ve.dims), off + np.array(vf.dims))
    shape = tuple(hi - lo)
    a = np.zeros(shape, dtype=bool)
    b = np.zeros(shape, dtype=bool)
    a[tuple(slice(-l, -l + d) for l, d in zip(lo, ve.dims))] = ve.mask
    b[tuple(slice(o - l, o - l + d) for o, l, d in zip(off, lo, vf.dims))] = vf.mask
    return a, b


def symm_diff_volume(E: GeomSet, F: GeomSet) -> float:
    """|E \\ F| + |F \\ E|."""
    if E.dim != F.dim:
        raise InvalidInput("sets of different dimension")
    if E.is_polygon != F.is_polygon:
        raise MixedRepresentation("rasterize the polygon set before comparing with voxels")
    if E.is_polygon:
        return float(shapely.area(shapely.symmetric_difference(E.shapely, F.shapely)))
    a, b = _embed(E, F)
    return float(np.count_nonzero(a ^ b)) * E.voxels.h ** E.dim


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    centroids: np.ndarray
    normals: np.ndarray
    measures: np.ndarray

    @property
    def total(self) -> float:
        return float(self.measures.sum())

    def flux(self) -> np.ndarray:
        """Sum of measure * normal; vanishes for closed boundaries."""
        return (self.measures[:, None] * self.normals).sum(axis=0)

    def __len__(self):
        return len(self.measures)


def boundary_mesh(E: GeomSet) -> BoundaryMesh:
    """Facets of the boundary with outward unit normals."""
    cached = E._meta.get("mesh")
    if cached is not None:
        return cached
    if E.is_polygon:
        a, b = E.segments
        d = b - a
        L = np.linalg.norm(d, axis=1)
        keep = L > 0
        nrm = np.column_stack([d[:, 1], -d[:, 0]])[keep] / L[keep, None]
        mesh = BoundaryMesh((a + b)[keep] / 2, nrm, L[keep])
    elif E.dim == 2:
        mesh = _marching_squares(E)
    else:
        mesh = _marching_cubes(E)
    E._meta["mesh"] = mesh
    return mesh


def _smoothed(vx: VoxelGrid, pad: int) -> np.ndarray:
    m = np.pad(vx.mask.astype(float), pad)
    return ndimage.gaussian_filter(m, MESH_SIGMA, mode="constant")


def _marching_squares(E: GeomSet) -> BoundaryMesh:
    from skimage import measure

    vx = E.voxels
    pad = 4
    cents, nrms, meas = [], [], []
    for c in measure.find_contours(_smoothed(vx, pad), 0.5):
        p = vx.origin + (c - pad + 0.5) * vx.h
        a, b = p[:-1], p[1:]
        d = b - a
        L = np.linalg.norm(d, axis=1)
        keep = L > 0
        a, b, d, L = a[keep], b[keep], d[keep], L[keep]
        n = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
        mid = (a + b) / 2
        # orient the loop outward: the side the normal points to lies outside E
        probe = E.contains(mid + n * (0.25 * vx.h))
        if probe.mean() > 0.5:
            n = -n
        cents.append(mid)
        nrms.append(n)
        meas.append(L)
    return BoundaryMesh(np.concatenate(cents), np.concatenate(nrms), np.concatenate(meas))


def _marching_cubes(E: GeomSet) -> BoundaryMesh:
    from skimage import measure

    vx = E.voxels
    pad = 4
    verts, faces, _, _ = measure.marching_cubes(_smoothed(vx, pad), 0.5)
    verts = vx.origin + (verts - pad + 0.5) * vx.h
    tri = verts[faces]
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = np.linalg.norm(cr, axis=1) / 2
    keep = area > 0
    cr, area, tri = cr[keep], area[keep], tri[keep]
    n = cr / (2 * area[:, None])
    cent = tri.mean(axis=1)
    # divergence theorem: sum (x . n) dA = 3|E| > 0 for outward normals
    if np.sum((cent * n).sum(1) * area) < 0:
        n = -n
    return BoundaryMesh(cent, n, area)


def perimeter(E: GeomSet) -> float:
    return boundary_mesh(E).total


def anisotropic_perimeter(E: GeomSet, K: WulffShape) -> float:
    """Wulff perimeter: sum over facets of support(K, normal) * measure."""
    if E.dim != K.dim:
        raise InvalidInput("set and Wulff shape differ in dimension")
    mesh = boundary_mesh(E)
    return float(np.dot(support_value(K, mesh.normals), mesh.measures))


# -- disc intersections (exact for polygons) -------------------------------

def _clip_params(a, b, r):
    d = b - a
    qa = (d * d).sum(-1)
    qb = 2 * (a * d).sum(-1)
    qc = (a * a).sum(-1) - r * r
    disc = qb * qb - 4 * qa * qc
    ok = (disc > 0) & (qa > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(ok, (-qb - sq) / (2 * qa), 0.0)
        t2 = np.where(ok, (-qb + sq) / (2 * qa), 0.0)
    s1 = np.clip(t1, 0, 1)
    s2 = np.clip(t2, 0, 1)
    s2 = np.where(ok, np.maximum(s1, s2), s1)
    return d, ok, s1, s2


def _sector(u, v, r):
    return 0.5 * r * r * np.arctan2(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0], (u * v).sum(-1))


def polygon_disc_area(E: GeomSet, center, r: float) -> float:
    """Exact |E ∩ B_r(center)| for a polygon set."""
    a, b = E.segments
    c = np.asarray(center, dtype=float)
    a, b = a - c, b - c
    d, ok, s1, s2 = _clip_params(a, b, r)
    p1 = a + s1[:, None] * d
    p2 = a + s2[:, None] * d
    tri = 0.5 * (p1[:, 0] * p2[:, 1] - p1[:, 1] * p2[:, 0])
    inside = np.where(ok, _sector(a, p1, r) + tri + _sector(p2, b, r), _sector(a, b, r))
    return float(inside.sum())


def polygon_boundary_in_disc(E: GeomSet, center, r: float) -> float:
    """Exact length of the polygon boundary inside B_r(center)."""
    a, b = E.segments
    c = np.asarray(center, dtype=float)
    d, ok, s1, s2 = _clip_params(a - c, b - c, r)
    return float(np.sum(np.where(ok, (s2 - s1) * np.linalg.norm(d, axis=1), 0.0)))


def ball_fraction(E: GeomSet, x, r: float) -> float:
    """|E ∩ B_r(x)| / |B_r|."""
    if E.is_polygon:
        return polygon_disc_area(E, x, r) / (math.pi * r * r)
    vx = E.voxels
    x = np.asarray(x, dtype=float)
    lo = np.maximum(np.floor((x - r - vx.origin) / vx.h).astype(int), 0)
    hi = np.minimum(np.ceil((x + r - vx.origin) / vx.h).astype(int) + 1, np.array(vx.dims))
    grids = np.meshgrid(*[np.arange(l, u) for l, u in zip(lo, hi)], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    cen = vx.origin + (idx + 0.5) * vx.h
    inb = ((cen - x) ** 2).sum(1) <= r * r
    # the ball is discretized by the same cell centers; count cells outside the grid too
    total = _lattice_ball_count(x, r, vx)
    return float(vx.mask[tuple(idx[inb].T)].sum()) / total if total else 0.0


def _lattice_ball_count(x, r, vx: VoxelGrid) -> int:
    lo = np.floor((x - r - vx.origin) / vx.h).astype(int)
    hi = np.ceil((x + r - vx.origin) / vx.h).astype(int) + 1
    grids = np.meshgrid(*[np.arange(l, u) for l, u in zip(lo, hi)], indexing="ij")
    cen = vx.origin + (np.stack([g.ravel() for g in grids], 1) + 0.5) * vx.h
    return int((((cen - x) ** 2).sum(1) <= r * r).sum())


@dataclass(frozen=True, eq=False)
class DensityReport:
    point: np.ndarray
    radii: np.ndarray
    density_values: np.ndarray
    limit: float
    classification: str  # "Zero", "One" or "Essential"


def _aitken(v1, v2, v3):
    den = v1 + v3 - 2 * v2
    if abs(den) < 1e-14:
        return v3
    return (v1 * v3 - v2 * v2) / den


def density_classify(E: GeomSet, x, radii: Sequence[float]) -> DensityReport:
    """Classify x as a density-0, density-1 or essential-boundary point.

    The limit r -> 0 is estimated by Aitken/Richardson extrapolation over the
    three smallest radii.
    """
    r = np.asarray(radii, dtype=float)
    if len(r) < 3 or np.any(np.diff(r) >= 0):
        raise InvalidInput("radii must be strictly decreasing with at least 3 entries")
    if r[-1] < 2 * E.resolution:
        raise ResolutionTooCoarse(f"smallest radius {r[-1]:g} is below twice the resolution {E.resolution:g}")
    vals = np.clip(np.array([ball_fraction(E, x, ri) for ri in r]), 0.0, 1.0)
    lim = float(np.clip(_aitken(*vals[-3:]), 0.0, 1.0))
    if lim < DENSITY_LOW:
        cls = "Zero"
    elif lim > DENSITY_HIGH:
        cls = "One"
    else:
        cls = "Essential"
    return DensityReport(np.asarray(x, dtype=float), r, vals, lim, cls)


def sample_boundary(E: GeomSet, count: int):
    """Equispaced (by arclength) boundary samples with their weights.

    Returns ``(points, weights, normals)`` where the weights add up to the
    boundary measure.
    """
    mesh = boundary_mesh(E)
    if E.is_polygon and E.dim == 2:
        a, b = E.segments
        L = np.linalg.norm(b - a, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(L)])
        total = cum[-1]
        s = (np.arange(count) + 0.5) * total / count
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(L) - 1)
        t = (s - cum[k]) / L[k]
        pts = a[k] + t[:, None] * (b[k] - a[k])
        return pts, np.full(count, total / count), mesh.normals[np.cumsum(L > 0)[k] - 1]
    order = np.arange(len(mesh))
    groups = np.array_split(order, min(count, len(order)))
    pts = np.array([mesh.centroids[g[len(g) // 2]] for g in groups])
    w = np.array([mesh.measures[g].sum() for g in groups])
    nrm = np.array([mesh.normals[g[len(g) // 2]] for g in groups])
    return pts, w, nrm


def boundary_measure_in_ball(E: GeomSet, x, r: float) -> float:
    if E.is_polygon:
        return polygon_boundary_in_disc(E, x, r)
    mesh = boundary_mesh(E)
    inb = ((mesh.centroids - x) ** 2).sum(1) <= r * r
    return float(mesh.measures[inb].sum())


@dataclass
class UpperDensityReport:
    a0: float
    r0: float
    worst_ratio: float
    worst_point: np.ndarray
    worst_radius: float
    violations: list
    passed: bool


def upper_density_check(E: GeomSet, a0: float, r0: float, samples: int, rungs: int = 24) -> UpperDensityReport:
    """Check H^{n-1}(∂E ∩ B_r(x)) <= a0 r^{n-1} on sampled boundary points."""
    if a0 <= 0 or r0 <= 0:
        raise InvalidInput("a0 and r0 must be positive")
    n = E.dim
    res = E.resolution if E.resolution > 0 else r0 * 1e-3
    radii = np.geomspace(2 * res, r0, rungs)
    pts, _, _ = sample_boundary(E, samples)
    worst = (-1.0, None, None)
    viol = []
    for p in pts:
        for r in radii:
            ratio = boundary_measure_in_ball(E, p, r) / r ** (n - 1)
            if ratio > worst[0]:
                worst = (ratio, p, r)
            if ratio > a0:
                viol.append((p.tolist(), float(r), float(ratio)))
    return UpperDensityReport(a0, r0, float(worst[0]), worst[1], float(worst[2]), viol, not viol)


def unit_ball_measure(n: int) -> float:
    return unit_ball_volume(n)


def voxel_distance(E: GeomSet) -> np.ndarray:
    """Exact Euclidean distance from each inside voxel center to the nearest outside one.

    Uses the separable exact transform on the grid padded by one empty layer,
    so voxels on the grid edge see the exterior.
    """
    if E.is_polygon:
        raise MixedRepresentation("voxel_distance needs a voxel set")
    m = np.pad(E.voxels.mask, 1)
    d = ndimage.distance_transform_edt(m, sampling=E.voxels.h)
    return d[tuple(slice(1, -1) for _ in range(E.dim))]
