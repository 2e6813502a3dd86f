"""Boundary traces through Whitney-cube chains and the empirical trace constant.

The trace at a boundary point x is read off the chain of cube averages that
follows the discrete John curve from the center cube down to x.  The chain
ends in the truncation-level cell containing x, which stands in for the limit
of shrinking averages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInput, Unreachable, UndersampledCube
from .geomset import GeomSet, sample_boundary, scanline_mask, volume
from .johnmetric import JohnEstimate, estimate_john
from .whitney import DILATION, WhitneyDecomposition

# crude certified cube-Poincaré constant n * (11/10) * sqrt(n)
def poincare_constant(n: int) -> float:
    return n * DILATION * math.sqrt(n)


MIN_SAMPLES = 4
SKIP_LIMIT = 0.01
FD_REL = 1e-6


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Analytic test field ``fn: (m, n) -> (m,)`` with an optional support box."""

    name: str
    fn: Callable
    support: tuple | None = None
    spec: dict = field(default_factory=dict)
    exact_l1: Callable | None = None   # omega -> ∫_Ω |Du| when known in closed form, else None

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.broadcast_to(np.asarray(self.fn(pts), dtype=float), (len(pts),)).copy()

    def grad_norm(self, pts, h: float) -> np.ndarray:
        """|Du| by central differences of step h."""
        pts = np.atleast_2d(pts)
        g2 = np.zeros(len(pts))
        for k in range(pts.shape[1]):
            e = np.zeros(pts.shape[1])
            e[k] = h
            g2 += ((self(pts + e) - self(pts - e)) / (2 * h)) ** 2
        return np.sqrt(g2)

    def sup_norm(self, omega: GeomSet, samples: int = 4096) -> float:
        lo, hi = omega.bounds()
        rng = np.random.default_rng(0)
        p = rng.uniform(lo, hi, size=(samples, len(lo)))
        p = p[omega.contains(p)]
        return float(np.max(np.abs(self(p)))) if len(p) else 0.0

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(f"({self.name}+{other.name})", lambda p: self(p) + other(p))

    def __rmul__(self, a: float) -> "ScalarField":
        return ScalarField(f"{a}*{self.name}", lambda p: a * self(p),
                           self.support if a != 0 else None)


def constant(c: float) -> ScalarField:
    return ScalarField(f"constant({c})", lambda p: np.full(len(p), float(c)), None,
                       {"kind": "constant", "value": c})


def linear(a, b: float = 0.0) -> ScalarField:
    a = np.asarray(a, dtype=float)
    return ScalarField(f"linear({a.tolist()},{b})", lambda p: p @ a + b, None,
                       {"kind": "linear", "a": a.tolist(), "b": b})


def radial_bump(center, scale: float) -> ScalarField:
    """max(0, 1 - |x - center| / scale)."""
    c = np.asarray(center, dtype=float)
    if scale <= 0:
        raise InvalidInput("bump scale must be positive")
    return ScalarField(f"radial_bump({c.tolist()},{scale})",
                       lambda p: np.maximum(0.0, 1.0 - np.linalg.norm(p - c, axis=1) / scale),
                       (c - scale, c + scale), {"kind": "radial_bump", "center": c.tolist(), "scale": scale})


def dist_to_boundary(omega: GeomSet) -> ScalarField:
    def fn(p):
        d = omega.distance_to_boundary(p)
        return np.where(omega.contains(p), d, -d)

    # |Du| = 1 a.e. in Ω (eikonal), so the total variation is |Ω|
    return ScalarField("dist_to_boundary", fn, None, {"kind": "dist_to_boundary"},
                       lambda E: volume(E) if E is omega else None)


def field_from_spec(spec: dict, omega: GeomSet) -> ScalarField:
    kind = spec.get("kind")
    if kind == "constant":
        return constant(spec.get("value", 1.0))
    if kind == "linear":
        return linear(spec["a"], spec.get("b", 0.0))
    if kind == "radial_bump":
        return radial_bump(spec["center"], spec["scale"])
    if kind == "dist_to_boundary":
        return dist_to_boundary(omega)
    raise InvalidInput(f"unknown field kind {kind!r}")


def load_suite(path, omega: GeomSet) -> list[ScalarField]:
    with open(path) as fh:
        data = json.load(fh)
    items = data["fields"] if isinstance(data, dict) else data
    return [field_from_spec(s, omega) for s in items]


def default_suite(omega: GeomSet, count: int = 20, seed: int = 0) -> list[ScalarField]:
    """Deterministic mix of linear fields, bumps and the distance function."""
    rng = np.random.default_rng(seed)
    lo, hi = omega.bounds()
    size = float(np.max(hi - lo))
    out = [linear([1.0, 0.0]), linear([0.0, 1.0]), dist_to_boundary(omega)]
    while len(out) < count:
        if len(out) % 2:
            th = rng.uniform(0, 2 * np.pi)
            out.append(linear([math.cos(th), math.sin(th)], float(rng.normal())))
        else:
            x, _, _ = sample_boundary(omega, 64)
            c = x[rng.integers(len(x))] + rng.normal(scale=0.05 * size, size=2)
            out.append(radial_bump(c, float(rng.uniform(0.2, 0.6) * size)))
    return out[:count]


# -- cube averages ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CubeAverages:
    """u averaged over (11/10)Q for every cube, and |Du| averaged likewise."""

    values: np.ndarray
    grad: np.ndarray
    q: int


def _dilated_grid(lo, side, q):
    """Midpoint grid of q x q points on each (11/10)-dilated box."""
    s = DILATION * side
    lo_d = lo - (s - side)[:, None] / 2
    t = (np.arange(q) + 0.5) / q
    off = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    return lo_d[:, None, :] + off[None] * s[:, None, None]


def cube_averages(u: ScalarField, W: WhitneyDecomposition, q: int = 8, chunk: int = 400_000,
                  with_grad: bool = True) -> CubeAverages:
    """Means of u and |Du| over a q x q midpoint grid of each dilated cube.

    Dilated Whitney cubes stay inside Ω (dist(Q, ∂Ω) ≥ √n·l), so no mask is
    needed.  The finest side must carry at least 4 samples.
    """
    if q < MIN_SAMPLES:
        raise UndersampledCube(f"{q} samples per side; at least {MIN_SAMPLES} required")
    lo, side = W.lows(), W.sides()
    m = len(side)
    vals = np.empty(m)
    grads = np.full(m, np.nan)
    per = max(1, chunk // (q * q))
    for s in range(0, m, per):
        pts = _dilated_grid(lo[s:s + per], side[s:s + per], q)
        k = len(pts)
        flat = pts.reshape(-1, 2)
        vals[s:s + k] = u(flat).reshape(k, -1).mean(1)
        if with_grad:
            h = FD_REL * max(1.0, float(np.abs(flat).max()))
            grads[s:s + k] = u.grad_norm(flat, h).reshape(k, -1).mean(1)
    return CubeAverages(vals, grads, q)


def gradient_l1(u: ScalarField, omega: GeomSet, cells: int = 1024) -> float:
    """∫_Ω |Du| by finite differences on a cell-centered grid times cell area.

    Central differences where both neighbors lie in Ω, one-sided otherwise.
    The grid covers Ω's bounding box clipped to the field's support.
    Fields that know their integral in closed form skip the grid.
    """
    if u.exact_l1 is not None:
        v = u.exact_l1(omega)
        if v is not None:
            return float(v)
    lo, hi = omega.bounds()
    if u.support is not None:
        lo = np.maximum(lo, np.asarray(u.support[0]))
        hi = np.minimum(hi, np.asarray(u.support[1]))
        if np.any(hi <= lo):
            return 0.0
    pad = (hi - lo) / cells
    lo, hi = lo - pad, hi + pad
    h = (hi - lo) / cells
    # rescale to square cells for the scanline rasterizer
    scaled = GeomSet.polygon(*[(lp - lo) / h for lp in omega.loops])
    mask = scanline_mask(scaled, 1.0, np.zeros(2), (cells, cells))
    xs = lo[0] + (np.arange(cells) + 0.5) * h[0]
    ys = lo[1] + (np.arange(cells) + 0.5) * h[1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = np.zeros((cells, cells))
    vals[mask] = u(np.column_stack([X[mask], Y[mask]]))
    g2 = np.zeros((cells, cells))
    for ax in (0, 1):
        fwd = np.zeros_like(mask)
        bwd = np.zeros_like(mask)
        sl = [slice(None)] * 2
        sl_next = [slice(None)] * 2
        sl[ax], sl_next[ax] = slice(0, -1), slice(1, None)
        fwd[tuple(sl)] = mask[tuple(sl)] & mask[tuple(sl_next)]
        bwd[tuple(sl_next)] = mask[tuple(sl_next)] & mask[tuple(sl)]
        vf = np.zeros_like(vals)
        vb = np.zeros_like(vals)
        vf[tuple(sl)] = vals[tuple(sl_next)] - vals[tuple(sl)]
        vb[tuple(sl_next)] = vals[tuple(sl_next)] - vals[tuple(sl)]
        d = np.where(fwd & bwd, (vf + vb) / 2, np.where(fwd, vf, np.where(bwd, vb, 0.0))) / h[ax]
        g2 += d * d
    return float(np.sum(np.sqrt(g2)[mask]) * h[0] * h[1])


# -- chains -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Chain:
    """Cube chain from the center cube to the boundary point ``x``.

    ``cubes`` are Whitney-cube positions ordered from Q0 toward x;
    ``terminal`` is the (level, i, j) of the truncation cell containing x.
    """

    x: np.ndarray
    cubes: list
    sides: np.ndarray
    terminal: tuple
    C1: float

    def __len__(self):
        return len(self.cubes)


def john_for(W: WhitneyDecomposition, x0) -> JohnEstimate:
    if W.domain is None:
        raise InvalidInput("decomposition carries no domain")
    key = tuple(np.round(np.asarray(x0, dtype=float), 15).tolist())
    if key not in W._cache:
        W._cache[key] = estimate_john(W.domain, x0, W)
    return W._cache[key]


def _terminal_cell(W: WhitneyDecomposition, x):
    s = W.base_scale * 2.0 ** -W.max_level
    omega = W.domain
    best, best_n = None, -1
    seen = set()
    for dx in (-1, 1):
        for dy in (-1, 1):
            p = x + 1e-9 * s * np.array([dx, dy])
            idx = tuple(np.floor((p - W.origin) / s).astype(int).tolist())
            if idx in seen:
                continue
            seen.add(idx)
            lo = W.origin + np.array(idx) * s
            pts = _dilated_grid(lo[None], np.array([s]), 16)[0]
            n_in = int(omega.contains(pts).sum())
            if n_in > best_n:
                best, best_n = idx, n_in
    return (W.max_level, *best)


def chain_to_boundary(W: WhitneyDecomposition, x, x0, max_gap: float = 5.0) -> Chain:
    """Cubes along the discrete John curve from x0's cube to the boundary point x.

    The chain follows the curve of the boundary cube nearest to x; x must lie
    within max_gap·√n·l of that cube's center, otherwise Unreachable.
    """
    x = np.asarray(x, dtype=float)
    est = john_for(W, x0)
    c = W.centers()[est.targets]
    side = W.sides()
    k = int(np.argmin(np.linalg.norm(c - x, axis=1)))
    t = int(est.targets[k])
    n = W.dim
    if np.linalg.norm(c[k] - x) > max_gap * math.sqrt(n) * side[t]:
        raise Unreachable(f"no boundary cube within {max_gap}√n·l of {x.tolist()}")
    cubes = est.chain(t)[::-1]
    lo = W.lows()[cubes]
    sd = side[cubes]
    pad = (DILATION - 1) / 2 * sd
    far = np.maximum(np.abs(lo - pad[:, None] - x), np.abs(lo + (sd + pad)[:, None] - x))
    C1 = float(np.max(np.linalg.norm(far, axis=1) / sd))
    return Chain(x, cubes, sd, _terminal_cell(W, x), C1)


def _terminal_points(W: WhitneyDecomposition, cell, q=16, q_max=256):
    """Samples of (11/10)R ∩ Ω, refined until at least 4·4 of them land in Ω."""
    key = ("cell", cell)
    if key in W._cache:
        return W._cache[key]
    s = W.base_scale * 2.0 ** -W.max_level
    lo = W.origin + np.array(cell[1:]) * s
    while True:
        pts = _dilated_grid(lo[None], np.array([s]), q)[0]
        pts = pts[W.domain.contains(pts)]
        if len(pts) >= MIN_SAMPLES ** 2 or q >= q_max:
            break
        q *= 2
    if len(pts) < MIN_SAMPLES:
        raise UndersampledCube(f"terminal cell {cell} holds {len(pts)} samples in Ω")
    W._cache[key] = (pts, lo, s)
    return pts, lo, s


def _terminal_stats(u: ScalarField, W: WhitneyDecomposition, cell):
    pts, lo, s = _terminal_points(W, cell)
    h = FD_REL * max(1.0, float(np.abs(pts).max()))
    return float(u(pts).mean()), float(u.grad_norm(pts, h).mean()), lo, s


@dataclass(frozen=True)
class TraceValue:
    value: float
    oscillation: float
    start_average: float


def _chain_stats(u: ScalarField, W: WhitneyDecomposition, cubes, q: int = 8):
    """Dilated-cube means of u and |Du| for the listed cubes only."""
    lo, side = W.lows()[cubes], W.sides()[cubes]
    pts = _dilated_grid(lo, side, q)
    flat = pts.reshape(-1, W.dim)
    vals = u(flat).reshape(len(cubes), -1).mean(1)
    h = FD_REL * max(1.0, float(np.abs(flat).max()))
    grads = u.grad_norm(flat, h).reshape(len(cubes), -1).mean(1)
    return vals, grads


def trace_eval(u: ScalarField, W: WhitneyDecomposition, x, x0, chain: Chain | None = None) -> TraceValue:
    """Tu(x): the average over the truncation cell at x, reached along the chain."""
    ch = chain_to_boundary(W, x, x0) if chain is None else chain
    vals, _ = _chain_stats(u, W, ch.cubes)
    seq = list(vals)
    term = float(u(_terminal_points(W, ch.terminal)[0]).mean())
    seq.append(term)
    osc = float(np.sum(np.abs(np.diff(seq))))
    return TraceValue(term, osc, float(seq[0]))


def chain_sum_bound(u: ScalarField, W: WhitneyDecomposition, x, x0, chain: Chain | None = None) -> float:
    """Σ_k C_P l(Q_k) avg_{Q̂_k}|Du| along the chain, plus the link to the terminal cell.

    The last Whitney cube and the terminal cell need not touch; the link is
    charged C_P·D·avg|Du| over the box hull of both dilated cells (clipped to
    Ω), D being the hull's diameter.
    """
    ch = chain_to_boundary(W, x, x0) if chain is None else chain
    _, grads = _chain_stats(u, W, ch.cubes)
    n = W.dim
    cp = poincare_constant(n)
    total = cp * float(np.sum(ch.sides * grads))
    _, tg, tlo, ts = _terminal_stats(u, W, ch.terminal)
    last = ch.cubes[-1]
    llo, ls = W.lows()[last], W.sides()[last]
    pad_l, pad_t = (DILATION - 1) / 2 * ls, (DILATION - 1) / 2 * ts
    hlo = np.minimum(llo - pad_l, tlo - pad_t)
    hhi = np.maximum(llo + ls + pad_l, tlo + ts + pad_t)
    q = 32
    t = (np.arange(q) + 0.5) / q
    grid = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2) * (hhi - hlo) + hlo
    grid = grid[W.domain.contains(grid)]
    h = FD_REL * max(1.0, float(np.abs(grid).max()))
    link = cp * float(np.linalg.norm(hhi - hlo)) * float(u.grad_norm(grid, h).mean())
    return total + cp * ts * tg + link


# -- trace constant ---------------------------------------------------------------

def weighted_median(values, weights) -> float:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cw = np.cumsum(w)
    k = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(v[min(k, len(v) - 1)])


def l1_deviation(values, weights, c: float) -> float:
    return float(np.sum(np.asarray(weights) * np.abs(np.asarray(values) - c)))


@dataclass(frozen=True, eq=False)
class TraceReport:
    field: str
    boundary_samples: np.ndarray  # rows (x, y, Tu(x))
    weights: np.ndarray = field(repr=False)
    median: float = 0.0
    lhs: float = 0.0
    rhs: float = 0.0
    c_emp: float = 0.0


@dataclass(frozen=True, eq=False)
class SuiteReport:
    reports: list
    c_emp: float
    skipped: int
    samples: int
    max_level: int

    @property
    def skipped_fraction(self) -> float:
        return self.skipped / self.samples if self.samples else 0.0

    @property
    def ok(self) -> bool:
        return self.skipped_fraction <= SKIP_LIMIT

    def to_json(self) -> dict:
        return {
            "max_level": self.max_level,
            "c_emp": self.c_emp,
            "samples": self.samples,
            "skipped": self.skipped,
            "ok": self.ok,
            "fields": [{"field": r.field, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.c_emp, "median": r.median}
                       for r in self.reports],
        }


def trace_constant(omega: GeomSet, suite, W: WhitneyDecomposition, x0, boundary_samples: int = 1000,
                   grid_cells: int = 1024) -> SuiteReport:
    """Empirical ratio inf_c ∫_∂Ω |Tu - c| / ∫_Ω |Du| for every field of the suite.

    Boundary samples are equispaced in arclength with equal weights; samples
    with no boundary cube nearby are skipped and counted.
    """
    pts, wts, _ = sample_boundary(omega, boundary_samples)
    chains, keep = [], []
    for k, x in enumerate(pts):
        try:
            chains.append(chain_to_boundary(W, x, x0))
            keep.append(k)
        except Unreachable:
            pass
    keep = np.array(keep, dtype=int)
    # all terminal cells stacked, so each field is evaluated in one call
    cells = [_terminal_points(W, ch.terminal)[0] for ch in chains]
    counts = np.array([len(c) for c in cells])
    P = np.concatenate(cells) if cells else np.zeros((0, 2))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    reports = []
    for u in suite:
        tu = np.add.reduceat(u(P), starts) / counts if len(P) else np.zeros(0)
        w = wts[keep]
        c = weighted_median(tu, w) if len(tu) else 0.0
        lhs = l1_deviation(tu, w, c)
        rhs = gradient_l1(u, omega, grid_cells)
        ratio = 0.0 if lhs <= 1e-14 * max(1.0, rhs) else (lhs / rhs if rhs > 0 else math.inf)
        reports.append(TraceReport(u.name, np.column_stack([pts[keep], tu]), w, c, lhs, rhs, ratio))
    c_emp = max((r.c_emp for r in reports), default=0.0)
    return SuiteReport(reports, c_emp, len(pts) - len(keep), len(pts), W.max_level)


@dataclass(frozen=True, eq=False)
class SoundnessReport:
    points: int
    checked: int
    worst_margin: float     # max over points of |Tu - u_Q0| - bound - slack; <= 0 is sound
    failures: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.worst_margin <= 0.0


def random_boundary_points(omega: GeomSet, count: int, seed: int = 0) -> np.ndarray:
    """Boundary points uniform in arclength."""
    a, b = omega.segments
    L = np.linalg.norm(b - a, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(L)])
    s = np.sort(np.random.default_rng(seed).uniform(0, cum[-1], count))
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(L) - 1)
    t = (s - cum[k]) / np.maximum(L[k], 1e-300)
    return a[k] + t[:, None] * (b[k] - a[k])


def chain_soundness(u: ScalarField, W: WhitneyDecomposition, x0, points, slack_rel: float = 1e-6) -> SoundnessReport:
    """Check |Tu(x) - u_Q0| ≤ chain_sum_bound(x) + slack_rel·‖u‖_∞ at each point."""
    slack = slack_rel * u.sup_norm(W.domain)
    worst, checked, fails = -math.inf, 0, []
    for x in np.atleast_2d(points):
        try:
            ch = chain_to_boundary(W, x, x0)
        except Unreachable:
            continue
        tv = trace_eval(u, W, x, x0, ch)
        m = abs(tv.value - tv.start_average) - chain_sum_bound(u, W, x, x0, ch) - slack
        checked += 1
        worst = max(worst, m)
        if m > 0:
            fails.append((np.asarray(x).tolist(), m))
    return SoundnessReport(len(np.atleast_2d(points)), checked, worst, fails)
