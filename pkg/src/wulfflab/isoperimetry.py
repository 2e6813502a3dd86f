"""Asymmetry index, isoperimetric deficit and the quantitative Wulff ratio."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import shapely

from .anisotropy import WulffShape
from .errors import DegenerateAsymmetry, InvalidInput
from .geomset import GeomSet, anisotropic_perimeter, volume

GOLDEN = (math.sqrt(5) - 1) / 2
DEGENERATE_FRACTION = 1e-6


@dataclass(frozen=True)
class AsymmetryResult:
    value: float
    translation: np.ndarray
    method: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DeficitReport:
    p_k: float
    bound: float
    deficit: float


def symdiff_to_translates(E: GeomSet, K: WulffShape):
    """Return ``f(X) -> |E Δ (x + K)|`` for a stack of translations X."""
    vol_e = volume(E)
    if E.is_polygon:
        geom = E.shapely
        kv = K.vertices
        vol_k = float(shapely.area(shapely.polygons(kv)))

        def f(X):
            X = np.atleast_2d(X)
            polys = shapely.polygons(kv[None, :, :] + X[:, None, :])
            inter = shapely.area(shapely.intersection(geom, polys))
            return vol_e + vol_k - 2.0 * inter

        return f

    vx = E.voxels
    h = vx.h
    A = K.normals / K.offsets[:, None]
    idx = np.argwhere(vx.mask)
    cen_e = vx.origin + (idx + 0.5) * h
    klo, khi = K.vertices.min(0), K.vertices.max(0)

    def in_k(pts, x):
        return np.max((pts - x) @ A.T, axis=1) <= 1.0

    def f(X):
        X = np.atleast_2d(X)
        out = np.empty(len(X))
        for i, x in enumerate(X):
            # lattice cells of E's grid whose centers fall in x + K
            lo = np.floor((x + klo - vx.origin) / h).astype(int)
            hi = np.ceil((x + khi - vx.origin) / h).astype(int) + 1
            grids = np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij")
            cells = np.stack([g.ravel() for g in grids], 1)
            cen = vx.origin + (cells + 0.5) * h
            n_k = int(in_k(cen, x).sum())
            n_both = int(in_k(cen_e, x).sum())
            out[i] = (len(cen_e) + n_k - 2 * n_both) * h ** E.dim
        return out

    return f


def _golden(phi, a, b, tol):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    evals = 2
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = phi(d)
        evals += 1
    return (c, fc, evals) if fc <= fd else (d, fd, evals)


def _directions(n: int) -> np.ndarray:
    dirs = list(np.eye(n))
    if n == 2:
        dirs += [np.array([1.0, 1.0]) / math.sqrt(2), np.array([1.0, -1.0]) / math.sqrt(2)]
    return np.array(dirs)


def asymmetry(E: GeomSet, K: WulffShape, refine_tol: float = 1e-5, max_sweeps: int = 40,
              start=None) -> AsymmetryResult:
    """A(E) = min_x |E Δ (x + K)|.

    Deterministic: barycentric start, a coarse grid of step |K|^(1/n)/20 over
    the box of translations where E and x + K can meet, then golden-section
    line searches along the axes (and diagonals in 2-D) until the step falls
    below ``refine_tol``.  With ``start`` given the grid is skipped and only
    the local refinement runs from there (a warm start for nearby sets).
    """
    if E.dim != K.dim:
        raise InvalidInput("set and Wulff shape differ in dimension")
    n = E.dim
    f = symdiff_to_translates(E, K)
    s = K.volume ** (1.0 / n)
    step = s / 20
    if start is not None:
        grid = np.atleast_2d(np.asarray(start, dtype=float))
        evals = 0
        starts = [grid[0]]
        step = s / 200
    else:
        x0 = E.barycenter() - K.barycenter
        elo, ehi = E.bounds()
        lo = elo - K.vertices.max(0)
        hi = ehi - K.vertices.min(0)
        axes = [np.arange(lo[i], hi[i] + step, step) for i in range(n)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], 1)
        grid = np.vstack([x0[None], grid])
        vals = np.concatenate([f(grid[i:i + 4096]) for i in range(0, len(grid), 4096)])
        evals = len(grid)
        order = np.argsort(vals, kind="stable")
        starts = [grid[0]] + [grid[k] for k in order[:3] if k != 0]

    dirs = _directions(n)
    best_x, best_v, sweeps_used = None, math.inf, 0
    for x in starts:
        x = np.array(x, dtype=float)
        fx = float(f(x)[0])
        w = step
        for sweep in range(max_sweeps):
            moved = 0.0
            for d in dirs:
                t, ft, ne = _golden(lambda t: float(f(x + t * d)[0]), -w, w, refine_tol)
                evals += ne
                if ft < fx:
                    x = x + t * d
                    fx = ft
                    moved = max(moved, abs(t))
            sweeps_used += 1
            if moved < refine_tol and w <= 4 * refine_tol:
                break
            w = max(min(w, 2 * moved if moved > 0 else w / 2), 4 * refine_tol)
        if fx < best_v:
            best_x, best_v = x, fx
    return AsymmetryResult(
        max(best_v, 0.0),
        best_x,
        {"grid_step": step, "grid_points": len(grid), "starts": len(starts),
         "sweeps": sweeps_used, "evaluations": evals, "refine_tol": refine_tol},
    )


def wulff_bound(E: GeomSet, K: WulffShape) -> float:
    n = E.dim
    return n * K.volume ** (1.0 / n) * volume(E) ** ((n - 1.0) / n)


def deficit(E: GeomSet, K: WulffShape) -> DeficitReport:
    vol = volume(E)
    if vol <= 0:
        raise InvalidInput("|E| must be positive")
    p = anisotropic_perimeter(E, K)
    b = wulff_bound(E, K)
    return DeficitReport(p, b, p / b - 1.0)


def wulff_margin(E: GeomSet, K: WulffShape) -> float:
    """P_K(E) - n |K|^(1/n) |E|^((n-1)/n); nonnegative by the Wulff inequality."""
    if volume(E) <= 0:
        raise InvalidInput("|E| must be positive")
    return anisotropic_perimeter(E, K) - wulff_bound(E, K)


def renormalize(E: GeomSet, K: WulffShape) -> GeomSet:
    """Uniformly rescale E so that |E| = |K|."""
    return E.scale((K.volume / volume(E)) ** (1.0 / E.dim))


def qwi_ratio(E: GeomSet, K: WulffShape, asym: AsymmetryResult | None = None) -> float:
    """(P_K(E) - P_K(K)) / A(E)^2 after rescaling E to |E| = |K|."""
    En = renormalize(E, K)
    a = asymmetry(En, K) if asym is None else asym
    if a.value <= DEGENERATE_FRACTION * K.volume:
        raise DegenerateAsymmetry(f"A(E) = {a.value:.3g} is below {DEGENERATE_FRACTION:g}|K|")
    # P_K(K) = n|K| holds exactly for polytopes
    return (anisotropic_perimeter(En, K) - E.dim * K.volume) / a.value ** 2


def qwi_sweep(family, K: WulffShape) -> list[dict]:
    """Rows (param, P_K, A, deficit, ratio) for ``family = [(param, E), ...]``."""
    rows = []
    for param, E in family:
        En = renormalize(E, K)
        a = asymmetry(En, K)
        d = deficit(En, K)
        try:
            r = qwi_ratio(En, K, a)
        except DegenerateAsymmetry:
            r = math.nan
        rows.append({"param": float(param), "P_K": d.p_k, "A": a.value, "deficit": d.deficit, "ratio": r})
    return rows


def write_sweep_csv(rows, path) -> None:
    """``path`` may be a filename or an open text stream."""
    if hasattr(path, "write"):
        _write_sweep_csv_to(rows, path)
        return
    with open(path, "w", newline="") as fh:
        _write_sweep_csv_to(rows, fh)


def _write_sweep_csv_to(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["param", "P_K", "A", "deficit", "ratio"])
    for r in rows:
        w.writerow([repr(float(r[k])) for k in ("param", "P_K", "A", "deficit", "ratio")])
