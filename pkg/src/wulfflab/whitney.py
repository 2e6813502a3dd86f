"""Dyadic Whitney decomposition of a planar domain and its cube graph.

Cube coordinates are integers: a cube at level k with index (i, j) is
``origin + base * 2^-k * ([i, i+1] x [j, j+1])``.  Because the base is a power
of two, every corner is a dyadic float and exact rational arithmetic on the
corners and the polygon vertices decides the ties the float path cannot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import networkx as nx
import numpy as np
import shapely

from .errors import EmptyInterior, InvalidInput
from .geomset import GeomSet, volume

MAX_LEVEL = 24
DILATION = 1.1
# relative error bound for the float box-to-segment distance
FLOAT_REL = 1e-12
# maximum multiplicity of the 11/10-dilated cubes, measured on the 2-D corpus
C2D = 4


@dataclass(frozen=True)
class WhitneyCube:
    level: int
    index: tuple
    dist_lo: float
    dist_hi: float
    side: float
    lo: tuple

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.lo) + self.side / 2

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.lo) + self.side


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    cubes: list
    base_scale: float
    origin: np.ndarray
    max_level: int
    uncovered_volume: float
    residual: np.ndarray = field(repr=False)  # (m, 3) rows (level, i, j) of cells left at max_level
    domain_volume: float = 0.0
    domain: GeomSet | None = field(default=None, repr=False)
    _graph: list = field(default_factory=list, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def adjacency(self) -> nx.Graph:
        if not self._graph:
            self._graph.append(cube_graph(self))
        return self._graph[0]

    @property
    def dim(self) -> int:
        return len(self.origin)

    @cached_property
    def _lows(self) -> np.ndarray:
        a = np.array([c.lo for c in self.cubes], dtype=float).reshape(-1, self.dim)
        a.setflags(write=False)
        return a

    @cached_property
    def _sides(self) -> np.ndarray:
        a = np.array([c.side for c in self.cubes], dtype=float)
        a.setflags(write=False)
        return a

    def lows(self) -> np.ndarray:
        return self._lows

    def sides(self) -> np.ndarray:
        return self._sides

    def centers(self) -> np.ndarray:
        return self._lows + self._sides[:, None] / 2

    def residual_boxes(self) -> np.ndarray:
        """(m, 4) array of residual cells as (x0, y0, x1, y1)."""
        if len(self.residual) == 0:
            return np.zeros((0, 4))
        s = self.base_scale * 2.0 ** -self.max_level
        lo = self.origin + self.residual[:, 1:] * s
        return np.hstack([lo, lo + s])

    def coverage_defect(self) -> float:
        return self.domain_volume - float(np.sum(self.sides() ** self.dim)) - self.uncovered_volume


def _base_and_origin(lo, hi):
    extent = float(np.max(hi - lo))
    base = 2.0 ** math.ceil(math.log2(extent))
    origin = np.floor(lo / base) * base
    return base, origin


def _box_seg_d2(lo, hi, a, b):
    """Squared distance between boxes [lo, hi] and segments [a, b] (pairwise)."""
    # box-to-segment distance is attained at a box corner or a segment endpoint
    # whenever the two do not intersect
    d = b - a
    dd = np.maximum((d * d).sum(-1), 1e-300)
    best = None
    for cx in (0, 1):
        for cy in (0, 1):
            p = np.stack([np.where(cx, hi[..., 0], lo[..., 0]), np.where(cy, hi[..., 1], lo[..., 1])], -1)
            t = np.clip(((p - a) * d).sum(-1) / dd, 0.0, 1.0)
            q = a + t[..., None] * d
            v = ((p - q) ** 2).sum(-1)
            best = v if best is None else np.minimum(best, v)
    for e in (a, b):
        q = np.clip(e, lo, hi)
        best = np.minimum(best, ((e - q) ** 2).sum(-1))
    return best


def _frac_point_seg_d2(p, a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    dd = dx * dx + dy * dy
    t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / dd if dd else Fraction(0)
    t = min(max(t, Fraction(0)), Fraction(1))
    qx, qy = a[0] + t * dx, a[1] + t * dy
    return (p[0] - qx) ** 2 + (p[1] - qy) ** 2


def _frac_seg_meets_box(lo, hi, a, b) -> bool:
    """Liang-Barsky clipping in rationals."""
    t0, t1 = Fraction(0), Fraction(1)
    for k in range(2):
        d = b[k] - a[k]
        if d == 0:
            if not lo[k] <= a[k] <= hi[k]:
                return False
            continue
        u, v = (lo[k] - a[k]) / d, (hi[k] - a[k]) / d
        t0, t1 = max(t0, min(u, v)), min(t1, max(u, v))
        if t0 > t1:
            return False
    return True


def exact_box_seg_d2(lo, hi, a, b) -> Fraction:
    """Exact squared distance between a box and a segment (0 when they meet)."""
    lo = [Fraction(float(v)) for v in lo]
    hi = [Fraction(float(v)) for v in hi]
    a = [Fraction(float(v)) for v in a]
    b = [Fraction(float(v)) for v in b]
    if _frac_seg_meets_box(lo, hi, a, b):
        return Fraction(0)
    # otherwise the distance is attained at a box corner or a segment endpoint
    best = None
    for px in (lo[0], hi[0]):
        for py in (lo[1], hi[1]):
            v = _frac_point_seg_d2((px, py), a, b)
            best = v if best is None else min(best, v)
    for e in (a, b):
        q = [min(max(e[k], lo[k]), hi[k]) for k in range(2)]
        best = min(best, (e[0] - q[0]) ** 2 + (e[1] - q[1]) ** 2)
    return best


class _BoundaryIndex:
    def __init__(self, omega: GeomSet):
        self.a, self.b = omega.segments
        self.lines = shapely.linestrings(np.stack([self.a, self.b], 1))
        self.tree = shapely.STRtree(self.lines)

    def distances(self, lo, hi) -> np.ndarray:
        boxes = shapely.box(lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1])
        (i, _), dist = self.tree.query_nearest(boxes, return_distance=True, all_matches=False)
        out = np.full(len(boxes), np.inf)
        np.minimum.at(out, i, dist)
        return out

    def near(self, lo, hi, r) -> np.ndarray:
        box = shapely.box(lo[0], lo[1], hi[0], hi[1])
        return self.tree.query(box, predicate="dwithin", distance=r)

    def exact_d2(self, lo, hi, d_float) -> Fraction:
        idx = self.near(lo, hi, d_float * (1 + 1e-9) + 1e-300)
        return min(exact_box_seg_d2(lo, hi, self.a[k], self.b[k]) for k in idx)


def _accept_threshold_cmp(bidx, lo, hi, d, side, n):
    """Sign of dist(Q, ∂Ω) - √n·side, exact when the float value is ambiguous."""
    thr = math.sqrt(n) * side
    if d > thr * (1 + 1e-9):
        return 1
    if d < thr * (1 - 1e-9):
        return -1
    e = bidx.exact_d2(lo, hi, d)
    t2 = n * Fraction(side) ** 2
    return (e > t2) - (e < t2)


def whitney_decompose(omega: GeomSet, max_level: int = 10) -> WhitneyDecomposition:
    """Stein-type dyadic Whitney decomposition truncated at ``max_level``.

    A cube Q of side l is accepted when Q lies in Ω and dist(Q, ∂Ω) ≥ √n·l;
    otherwise it is split (or dropped if it misses Ω).  Since a parent was
    rejected, dist(Q, ∂Ω) < √n·2l + diam(parent) = 4√n·l.  Top-level cubes are
    never accepted so the upper bound also holds at the coarsest level.
    """
    if not omega.is_polygon:
        if omega.dim != 2:
            raise InvalidInput("Whitney decomposition supports planar domains only")
        omega = _polygonize(omega)
    if not (0 <= max_level <= MAX_LEVEL):
        raise InvalidInput(f"max_level must lie in [0, {MAX_LEVEL}]")
    vol = volume(omega)
    if vol <= 0:
        raise EmptyInterior("domain has no interior")
    n = 2
    lo, hi = omega.bounds()
    base, origin = _base_and_origin(lo, hi)
    bidx = _BoundaryIndex(omega)
    geom = omega.shapely

    top = np.ceil((hi - origin) / base).astype(int)
    ii, jj = np.meshgrid(np.arange(top[0]), np.arange(top[1]), indexing="ij")
    active = np.stack([ii.ravel(), jj.ravel()], 1).astype(np.int64)

    cubes = []
    residual = np.zeros((0, 3), dtype=np.int64)
    for level in range(0, max_level + 1):
        if len(active) == 0:
            break
        side = base * 2.0 ** -level
        blo = origin + active * side
        bhi = blo + side
        d = bidx.distances(blo, bhi)
        inside = (d > 0) & omega.contains(blo + side / 2)
        outside = (d > 0) & ~inside
        accept = np.zeros(len(active), dtype=bool)
        if level > 0:
            thr = math.sqrt(n) * side
            accept = inside & (d > thr * (1 + 1e-9))
            # near-ties are settled exactly
            for k in np.flatnonzero(inside & (np.abs(d - thr) <= thr * 1e-9)):
                accept[k] = _accept_threshold_cmp(bidx, blo[k], bhi[k], d[k], side, n) >= 0
            for k in np.flatnonzero(accept):
                cubes.append(WhitneyCube(level, (int(active[k, 0]), int(active[k, 1])), 0.0, 0.0,
                                         side, (float(blo[k, 0]), float(blo[k, 1]))))
        split = ~accept & ~outside
        if level == max_level:
            keep = active[split]
            residual = np.hstack([np.full((len(keep), 1), level, dtype=np.int64), keep])
            break
        kids = active[split] * 2
        active = np.concatenate([kids + np.array(o) for o in ((0, 0), (1, 0), (0, 1), (1, 1))])

    cubes = _attach_bounds(cubes, bidx, n)
    s = base * 2.0 ** -max_level
    uncovered = _residual_area(geom, origin, base, max_level, residual, bidx)
    cubes.sort(key=lambda c: (c.level, c.index))
    return WhitneyDecomposition(cubes, base, origin, max_level, uncovered, residual, vol, omega)


def _residual_area(geom, origin, base, level, residual, bidx, coarse: int = 5) -> float:
    """Σ |R ∩ Ω| over residual cells.

    Cells clear of ∂Ω count in full; the others are clipped against the piece
    of Ω inside their coarse ancestor cell, which keeps each polygon small.
    """
    if len(residual) == 0:
        return 0.0
    s = base * 2.0 ** -level
    idx = residual[:, 1:]
    rlo = origin + idx * s
    d = bidx.distances(rlo, rlo + s)
    full = d > 0
    total = float(np.count_nonzero(full)) * s * s
    cut = np.flatnonzero(~full)
    if len(cut) == 0:
        return total
    c = min(coarse, level)
    parent = idx[cut] >> (level - c)
    keys, inv = np.unique(parent, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    cs = base * 2.0 ** -c
    plo = origin + keys * cs
    pieces = shapely.intersection(geom, shapely.box(plo[:, 0], plo[:, 1], plo[:, 0] + cs, plo[:, 1] + cs))
    lo = rlo[cut]
    boxes = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + s, lo[:, 1] + s)
    return total + float(np.sum(shapely.area(shapely.intersection(pieces[inv], boxes))))


def _attach_bounds(cubes, bidx, n):
    if not cubes:
        return cubes
    lo = np.array([c.lo for c in cubes])
    side = np.array([c.side for c in cubes])
    d = bidx.distances(lo, lo + side[:, None])
    out = []
    for c, dk in zip(cubes, d):
        dlo, dhi = dk * (1 - FLOAT_REL), dk * (1 + FLOAT_REL)
        # an exactly certified tie keeps the lower bound on the threshold
        dlo = max(dlo, math.sqrt(n) * c.side)
        out.append(WhitneyCube(c.level, c.index, float(dlo), float(dhi), c.side, c.lo))
    return out


def _polygonize(omega: GeomSet) -> GeomSet:
    vx = omega.voxels
    idx = np.argwhere(vx.mask)
    lo = vx.origin + idx * vx.h
    boxes = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + vx.h, lo[:, 1] + vx.h)
    u = shapely.union_all(boxes)
    u = shapely.simplify(u, 0.0)
    polys = list(u.geoms) if hasattr(u, "geoms") else [u]
    loops = []
    for p in polys:
        loops.append(np.asarray(shapely.orient_polygons(p).exterior.coords)[:-1])
        loops += [np.asarray(r.coords)[:-1] for r in shapely.orient_polygons(p).interiors]
    return GeomSet.polygon(*loops)


@dataclass(frozen=True)
class CertificationReport:
    cubes: int
    passed: int
    lower_failures: list
    upper_failures: list
    ratio_failures: list
    coverage_defect: float

    @property
    def ok(self) -> bool:
        return self.passed == self.cubes and not self.ratio_failures


def certify(W: WhitneyDecomposition, omega: GeomSet) -> CertificationReport:
    """Post-hoc check of √n·l ≤ dist(Q, ∂Ω) ≤ 4√n·l and the neighbor ratios.

    Distances are recomputed from scratch; every comparison the float interval
    cannot settle is decided in exact rational arithmetic.
    """
    if not omega.is_polygon:
        omega = _polygonize(omega)
    bidx = _BoundaryIndex(omega)
    n = W.dim
    lo, side = W.lows(), W.sides()
    d = bidx.distances(lo, lo + side[:, None]) if len(side) else np.zeros(0)
    low_f, up_f = [], []
    for k, (c, dk) in enumerate(zip(W.cubes, d)):
        clo, chi = lo[k], lo[k] + side[k]
        if dk <= 0 or not omega.contains(clo + side[k] / 2)[0]:
            low_f.append(k)
            continue
        if _accept_threshold_cmp(bidx, clo, chi, dk, side[k], n) < 0:
            low_f.append(k)
        ub = 4 * math.sqrt(n) * side[k]
        if dk > ub * (1 - 1e-9):
            e = bidx.exact_d2(clo, chi, dk)
            if e > 16 * n * Fraction(float(side[k])) ** 2:
                up_f.append(k)
    G = W.adjacency
    ratio_f = [(i, j) for i, j in G.edges if not 0.25 <= side[i] / side[j] <= 4]
    bad = set(low_f) | set(up_f)
    return CertificationReport(len(W.cubes), len(W.cubes) - len(bad), low_f, up_f, ratio_f,
                               W.coverage_defect())


def cube_graph(W: WhitneyDecomposition) -> nx.Graph:
    """Undirected graph on cube positions; an edge joins cubes whose closed boxes meet."""
    G = nx.Graph()
    G.add_nodes_from(range(len(W.cubes)))
    if len(W.cubes) < 2:
        return G
    lo, side = W.lows(), W.sides()
    boxes = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + side, lo[:, 1] + side)
    tree = shapely.STRtree(boxes)
    i, j = tree.query(boxes, predicate="intersects")
    m = i < j
    G.add_edges_from(zip(i[m].tolist(), j[m].tolist()))
    return G


def overlap_multiplicity(W: WhitneyDecomposition, samples: int = 100_000, seed: int = 0,
                         omega: GeomSet | None = None) -> int:
    """Max number of (11/10)-dilated cubes containing a common point.

    Evaluated at the (inward-nudged) lower-left corner of every pairwise
    intersection of dilated cubes, which is where the maximum depth of a
    family of boxes is attained, plus ``samples`` uniform points as a
    cross-check.
    """
    if not W.cubes:
        return 0
    lo, side = W.lows(), W.sides()
    pad = (DILATION - 1) / 2 * side
    dlo, dhi = lo - pad[:, None], lo + side[:, None] + pad[:, None]
    boxes = shapely.box(dlo[:, 0], dlo[:, 1], dhi[:, 0], dhi[:, 1])
    tree = shapely.STRtree(boxes)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(dlo.min(0), dhi.max(0), size=(samples, 2))
    # the deepest region of a family of boxes is itself a box whose lower-left
    # corner is the lower-left corner of some pairwise intersection
    i, j = tree.query(boxes, predicate="intersects")
    eps = 1e-9 * float(side.min())
    corners = np.maximum(dlo[i], dlo[j]) + eps
    pts = np.vstack([pts, corners])
    best = 0
    for s in range(0, len(pts), 200_000):
        chunk = shapely.points(pts[s:s + 200_000])
        hit, _ = tree.query(chunk, predicate="intersects")
        if len(hit):
            best = max(best, int(np.bincount(hit).max()))
    return best


def min_side_near(W: WhitneyDecomposition, x: float, window: float) -> float:
    """Smallest side among cubes whose centers have first coordinate in x ± window."""
    c = W.centers()
    m = np.abs(c[:, 0] - x) <= window
    return float(W.sides()[m].min()) if np.any(m) else math.nan


def write_cubes_csv(W: WhitneyDecomposition, path) -> None:
    """``path`` may be a filename or an open text stream."""
    if hasattr(path, "write"):
        _write_cubes_csv_to(W, path)
        return
    with open(path, "w", newline="") as fh:
        _write_cubes_csv_to(W, fh)


def _write_cubes_csv_to(W, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["level", "ix", "iy", "side", "dist_lo", "dist_hi"])
    for c in W.cubes:
        w.writerow([int(c.level), *map(int, c.index), repr(float(c.side)), repr(float(c.dist_lo)),
                    repr(float(c.dist_hi))])
