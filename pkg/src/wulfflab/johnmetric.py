"""John constants estimated on Whitney-cube graphs.

A John curve runs from a boundary point x to the center x0 and must satisfy
``len(γ[x, y]) <= J dist(y, ∂Ω)`` at every point y.  Discrete curves here
visit cube centers; the ratio is checked at every vertex against a certified
lower bound of the vertex's boundary distance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely

from .anisotropy import WulffShape
from .errors import (CenterOutside, DisconnectedDomain, InvalidInput, PointOutside,
                     SandwichViolated, Unreachable)
from .geomset import GeomSet
from .whitney import WhitneyDecomposition, whitney_decompose

DIST_REL = 1e-12
BISECT_REL = 1e-4
WORST_CURVES = 10


@dataclass(frozen=True, eq=False)
class JohnCurve:
    points: np.ndarray
    witness: np.ndarray  # rows (arclength from the start, dist(y, ∂Ω))
    bound: float = math.inf

    @property
    def ratio(self) -> float:
        if len(self.points) < 2:
            return 1.0
        L, d = self.witness[:, 0], self.witness[:, 1]
        m = d > 0
        return float(np.max(L[m] / d[m])) if np.any(m) else math.inf

    @property
    def certified(self) -> bool:
        return self.ratio <= self.bound + 1e-9

    @property
    def length(self) -> float:
        return float(self.witness[-1, 0]) if len(self.witness) else 0.0


@dataclass(frozen=True, eq=False)
class CubeNetwork:
    """Cube centers, certified center distances and the adjacency in CSR form."""

    centers: np.ndarray
    dist: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    sides: np.ndarray

    @cached_property
    def csr_lists(self):
        return self.indptr.tolist(), self.indices.tolist(), self.weights.tolist()

    def neighbors(self, v):
        s, e = self.indptr[v], self.indptr[v + 1]
        return self.indices[s:e], self.weights[s:e]


@dataclass(frozen=True, eq=False)
class JohnEstimate:
    center: np.ndarray
    J_value: float
    worst_start: np.ndarray
    resolution: int
    curves: list = field(repr=False)
    targets: np.ndarray = field(repr=False)
    target_points: np.ndarray = field(repr=False)
    target_ratios: np.ndarray = field(repr=False)
    successor: np.ndarray = field(repr=False)
    start_cubes: tuple = ()
    bracket: tuple = ()

    def chain(self, target: int) -> list[int]:
        """Cube indices from the target cube to a cube containing the center."""
        out = [int(target)]
        while True:
            nxt = int(self.successor[out[-1]])
            if nxt < 0:
                raise Unreachable(f"cube {target} has no path to the center")
            if nxt == out[-1]:
                return out
            out.append(nxt)


class _Segments:
    def __init__(self, omega: GeomSet):
        a, b = omega.segments
        self.tree = shapely.STRtree(shapely.linestrings(np.stack([a, b], 1)))

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        (i, _), d = self.tree.query_nearest(shapely.points(pts), return_distance=True, all_matches=False)
        out = np.full(len(pts), np.inf)
        np.minimum.at(out, i, d)
        return out


def cube_network(omega: GeomSet, W: WhitneyDecomposition) -> CubeNetwork:
    G = W.adjacency
    c = W.centers()
    d = _Segments(omega).distance(c) * (1 - DIST_REL)
    n = len(c)
    rows = [[] for _ in range(n)]
    for i, j in G.edges:
        rows[i].append(j)
        rows[j].append(i)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.array([j for r in rows for j in sorted(r)], dtype=np.int64)
    src = np.repeat(np.arange(n), np.diff(indptr))
    weights = np.linalg.norm(c[indices] - c[src], axis=1) if len(indices) else np.zeros(0)
    return CubeNetwork(c, d, indptr, indices, weights, W.sides())


def containing_cubes(W: WhitneyDecomposition, x) -> np.ndarray:
    """All cubes whose closed box contains x (several when x sits on a face)."""
    lo, side = W.lows(), W.sides()
    return np.flatnonzero(np.all((x >= lo) & (x <= lo + side[:, None]), axis=1))


def boundary_targets(W: WhitneyDecomposition) -> np.ndarray:
    """Cubes whose closed box touches a residual cell at the truncation level."""
    rb = W.residual_boxes()
    if len(rb) == 0 or not W.cubes:
        return np.zeros(0, dtype=np.int64)
    lo, side = W.lows(), W.sides()
    boxes = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + side, lo[:, 1] + side)
    tree = shapely.STRtree(shapely.box(rb[:, 0], rb[:, 1], rb[:, 2], rb[:, 3]))
    i, _ = tree.query(boxes, predicate="intersects")
    return np.unique(i)


def _budget_pass(net: CubeNetwork, starts, d0: float, e0, J: float):
    """Largest admissible arrival length g(v) at every cube, for constant J.

    g(v) = min(J d(v), max_w g(w) - |v w|), with the center x0 as sink.
    Computed by a max-first Dijkstra sweep since g only decreases along edges.
    """
    n = len(net.dist)
    g = [-math.inf] * n
    succ = [-1] * n
    heap = []
    Jd = (J * net.dist).tolist()
    for s, e in zip(starts.tolist(), np.atleast_1d(e0).tolist()):
        g[s] = min(Jd[s], J * d0 - e)
        succ[s] = s
        heap.append((-g[s], s))
    heapq.heapify(heap)
    done = [False] * n
    indptr, indices, weights = net.csr_lists
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        ng, v = pop(heap)
        if done[v]:
            continue
        done[v] = True
        gv = -ng
        if gv < 0:
            break
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            if done[w]:
                continue
            cand = gv - weights[k]
            if Jd[w] < cand:
                cand = Jd[w]
            if cand > g[w]:
                g[w] = cand
                succ[w] = v
                push(heap, (-cand, w))
    return np.array(g), np.array(succ, dtype=np.int64)


def _path_ratio(net, chain, b, x0, d0):
    c = net.centers[chain]
    pts = np.vstack([b[None], c, x0[None]])
    L = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    d = np.concatenate([[0.0], net.dist[chain], [d0]])
    return pts, np.column_stack([L, d])


def estimate_john(omega: GeomSet, x0, W: WhitneyDecomposition) -> JohnEstimate:
    """Smallest J for which every boundary-layer cube has a discrete John curve to x0.

    J is found by bisection on the feasibility of the backward budget pass;
    the reported J_value is the largest ratio actually witnessed on the
    returned curves, so it is an upper-bound certificate at the cube scale.
    """
    x0 = np.asarray(x0, dtype=float)
    if not omega.contains(x0)[0]:
        raise CenterOutside(f"center {x0.tolist()} is not inside the domain")
    start = containing_cubes(W, x0)
    if len(start) == 0:
        raise CenterOutside("center lies in the uncovered boundary layer; refine max_level")
    net = cube_network(omega, W)
    d0 = float(_Segments(omega).distance(x0[None])[0]) * (1 - DIST_REL)
    e0 = np.linalg.norm(x0 - net.centers[start], axis=1)

    targets = boundary_targets(W)
    if len(targets) == 0:
        raise InvalidInput("decomposition has no boundary layer")
    tpts = omega.nearest_boundary_point(net.centers[targets])
    tlen = np.linalg.norm(net.centers[targets] - tpts, axis=1)

    def feasible(J):
        g, succ = _budget_pass(net, start, d0, e0, J)
        return bool(np.all(tlen <= g[targets])), g, succ

    g = _budget_pass(net, start, d0, e0, 1e300)[0]
    if np.any(~np.isfinite(g[targets])):
        raise DisconnectedDomain("some boundary cubes are not connected to the center cube")

    lo, hi = 1.0 - 1e-9, 2.0
    ok, _, succ = feasible(hi)
    while not ok:
        lo, hi = hi, hi * 2
        ok, _, succ = feasible(hi)
    while (hi - lo) > BISECT_REL * hi:
        mid = 0.5 * (lo + hi)
        ok, _, s = feasible(mid)
        if ok:
            hi, succ = mid, s
        else:
            lo = mid

    est = JohnEstimate(x0, 0.0, x0, W.max_level, [], targets, tpts, np.zeros(0), succ,
                       tuple(start.tolist()), (lo, hi))
    ratios = np.empty(len(targets))
    for k, t in enumerate(targets):
        pts, wit = _path_ratio(net, est.chain(t), tpts[k], x0, d0)
        ratios[k] = np.max(wit[1:, 0] / wit[1:, 1])
    order = np.lexsort((targets, -ratios))
    curves = []
    for k in order[:WORST_CURVES]:
        pts, wit = _path_ratio(net, est.chain(targets[k]), tpts[k], x0, d0)
        curves.append(JohnCurve(pts, wit, float(ratios[k])))
    J = float(max(ratios.max(), 1.0))
    return JohnEstimate(x0, J, tpts[order[0]], W.max_level, curves, targets, tpts, ratios,
                        succ, tuple(start.tolist()), (lo, hi))


# -- forward minimax search ------------------------------------------------

def minimax_search(net: CubeNetwork, start_point, start_dist: float, is_goal, ratio_cap=math.inf,
                   allowed=None):
    """Two-key label-correcting search from a point for the least max-prefix ratio.

    Labels are (max ratio so far, length so far), popped in lexicographic
    order; a label is dropped when an earlier pop at the same cube was not
    longer, since that one dominates it in both keys.  Returns
    ``(ratio, points, witness)`` for the best goal cube, or None.
    """
    p = np.asarray(start_point, dtype=float)
    n = len(net.dist)
    allowed = np.ones(n, dtype=bool) if allowed is None else allowed
    first = _first_cubes(net, p, allowed)
    labels = []  # (node, length, ratio, parent label)
    heap = []
    for v in first:
        L = float(np.linalg.norm(net.centers[v] - p))
        r = L / net.dist[v]
        if r <= ratio_cap:
            labels.append((v, L, r, -1))
            heapq.heappush(heap, (r, L, v, len(labels) - 1))
    best_len = np.full(n, np.inf)
    while heap:
        r, L, v, lid = heapq.heappop(heap)
        if L >= best_len[v]:
            continue
        best_len[v] = L
        if is_goal(v):
            return _unwind(net, labels, lid, p, start_dist)
        s, e = net.indptr[v], net.indptr[v + 1]
        for w, wt in zip(net.indices[s:e], net.weights[s:e]):
            if not allowed[w]:
                continue
            L2 = L + wt
            if L2 >= best_len[w]:
                continue
            r2 = max(r, L2 / net.dist[w])
            if r2 > ratio_cap:
                continue
            labels.append((int(w), L2, r2, lid))
            heapq.heappush(heap, (r2, L2, int(w), len(labels) - 1))
    return None


def _first_cubes(net, p, allowed):
    lo = net.centers - net.sides[:, None] / 2
    inside = np.all((p >= lo) & (p <= lo + net.sides[:, None]), axis=1) & allowed
    hits = np.flatnonzero(inside)
    if len(hits):
        return hits[:1]
    # p sits in the boundary layer: enter through the nearest allowed cube
    cand = np.flatnonzero(allowed)
    if len(cand) == 0:
        return cand
    k = cand[np.argmin(np.linalg.norm(net.centers[cand] - p, axis=1))]
    return np.array([k])


def _unwind(net, labels, lid, p, start_dist):
    chain = []
    ratio = labels[lid][2]
    while lid >= 0:
        v, L, r, parent = labels[lid]
        chain.append((v, L))
        lid = parent
    chain.reverse()
    pts = np.vstack([p[None], net.centers[[v for v, _ in chain]]])
    wit = np.array([(0.0, start_dist)] + [(L, net.dist[v]) for v, L in chain])
    return ratio, pts, wit


@dataclass(frozen=True, eq=False)
class LocalJohnReport:
    trials: int
    passed: int
    worst_ratio: float
    worst: dict
    failures: list = field(repr=False, default_factory=list)

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.trials if self.trials else 1.0


def local_john_check(omega: GeomSet, J: float, s: float, W: WhitneyDecomposition, samples: int = 200,
                     seed: int = 0, boundary_points=None, r_min=None) -> LocalJohnReport:
    """Sampled test of the (J, s)-John property.

    For boundary points z, radii r < s and points x of B_r(z) ∩ Ω, look for
    a cube center w with |w - z| < J r and dist(w, ∂Ω) ≥ r / J reachable from
    x inside B_{Jr}(z) by a discrete curve of max prefix ratio ≤ J.
    """
    if J < 1:
        raise InvalidInput("J must be at least 1")
    if not (0 < s <= omega.diameter()):
        raise InvalidInput("s must lie in (0, diam(Ω)]")
    rng = np.random.default_rng(seed)
    net = cube_network(omega, W)
    seg = _Segments(omega)
    finest = W.base_scale * 2.0 ** -W.max_level
    r_min = max(8 * finest, s / 16) if r_min is None else r_min
    if boundary_points is None:
        from .geomset import sample_boundary

        zs = sample_boundary(omega, 4 * samples)[0]
        zs = zs[rng.choice(len(zs), samples, replace=len(zs) < samples)]
    else:
        zs = np.atleast_2d(np.asarray(boundary_points, float))
        zs = zs[rng.integers(0, len(zs), samples)]
    passed, worst, worst_r, fails = 0, {}, -1.0, []
    for z in zs:
        r = float(np.exp(rng.uniform(np.log(min(r_min, s * 0.999)), np.log(s))))
        x = _sample_in_ball(omega, z, r, rng)
        if x is None:
            passed += 1
            continue
        near = np.linalg.norm(net.centers - z, axis=1) < J * r
        goal = near & (net.dist >= r / J)
        dx = float(seg.distance(x[None])[0]) * (1 - DIST_REL)
        res = None
        if np.any(goal) and np.any(near):
            res = minimax_search(net, x, dx, lambda v: goal[v], ratio_cap=J, allowed=near)
        ok = res is not None
        passed += ok
        ratio = res[0] if ok else math.inf
        rec = {"z": z.tolist(), "r": r, "x": x.tolist(), "ratio": ratio}
        if not ok:
            fails.append(rec)
        if ratio > worst_r:
            worst_r, worst = ratio, rec
    return LocalJohnReport(len(zs), passed, worst_r, worst, fails)


def _sample_in_ball(omega, z, r, rng, tries=64):
    for _ in range(tries):
        u = rng.normal(size=2)
        p = z + r * np.sqrt(rng.uniform()) * u / np.linalg.norm(u)
        if omega.contains(p)[0]:
            return p
    return None


# -- curves for near-Wulff sets -----------------------------------------------

def sandwich_delta(E: GeomSet, K: WulffShape) -> tuple[float, float]:
    """(inner, outer) with (1 - inner)K ⊂ E ⊂ (1 + outer)K for E star-shaped about 0.

    The gauge of K is piecewise linear with breaks on the rays through K's
    vertices, so its extrema over a polygon edge sit at the edge endpoints or
    where the edge crosses one of those rays.
    """
    a, b = E.segments
    pts = [a]
    d = b - a
    v = K.vertices
    cr_a = np.outer(a[:, 0], v[:, 1]) - np.outer(a[:, 1], v[:, 0])
    cr_d = np.outer(d[:, 0], v[:, 1]) - np.outer(d[:, 1], v[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -cr_a / cr_d
    i, j = np.nonzero((t > 0) & (t < 1))
    pts.append(a[i] + t[i, j, None] * d[i])
    g = K.gauge(np.vstack(pts))
    return max(1.0 - float(np.min(g)), 0.0), max(float(np.max(g)) - 1.0, 0.0)


def john_curve_near_wulff(E: GeomSet, K: WulffShape, z, delta: float, J0: float | None = None,
                          max_level: int = 8, radial_points: int = 65) -> JohnCurve:
    """Explicit John curve from z toward the origin for (1-δ)K ⊂ E ⊂ (1+δ)K.

    Inside (1-2δ)K the radial segment [z, 0] works with ratio ≤ n; otherwise a
    short minimax escape into (1-2δ)K is prepended and the certified bound is
    3 J0 + n.
    """
    n = E.dim
    z = np.asarray(z, dtype=float)
    if not (0 < delta <= 1.0 / (6 * n)):
        raise InvalidInput(f"delta must lie in (0, 1/(6n)] = (0, {1 / (6 * n):.6g}]")
    inner, outer = sandwich_delta(E, K)
    if inner > delta + 1e-12 or outer > delta + 1e-12:
        raise SandwichViolated(f"needs {delta:.4g}; measured inner {inner:.4g}, outer {outer:.4g}")
    if not shapely.covers(E.shapely, shapely.Point(z)):
        raise PointOutside(f"{z.tolist()} is not in E")
    seg = _Segments(E)
    if float(K.gauge(z)) <= 1 - 2 * delta:
        pts, wit = _radial(z, seg, radial_points, 0.0)
        return JohnCurve(pts, wit, float(n))
    if J0 is None:
        W = whitney_decompose(E, max_level)
        J0 = estimate_john(E, np.zeros(n), W).J_value
    else:
        W = whitney_decompose(E, max_level)
    net = cube_network(E, W)
    goal = K.gauge(net.centers) <= 1 - 2 * delta
    dz = float(seg.distance(z[None])[0]) * (1 - DIST_REL)
    res = minimax_search(net, z, dz, lambda v: goal[v])
    if res is None:
        raise Unreachable("no escape path into (1-2δ)K")
    _, epts, ewit = res
    rpts, rwit = _radial(epts[-1], seg, radial_points, ewit[-1, 0])
    pts = np.vstack([epts, rpts[1:]])
    wit = np.vstack([ewit, rwit[1:]])
    return JohnCurve(pts, wit, 3 * J0 + n)


def _radial(z, seg, m, L0):
    if np.linalg.norm(z) == 0:
        return z[None].copy(), np.array([[L0, float(seg.distance(z[None])[0])]])
    t = np.linspace(1.0, 0.0, m)[:, None]
    pts = t * z[None]
    arc = L0 + (1 - t[:, 0]) * np.linalg.norm(z)
    d = seg.distance(pts) * (1 - DIST_REL)
    return pts, np.column_stack([arc, d])
