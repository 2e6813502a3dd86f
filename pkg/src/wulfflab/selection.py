"""Selection of well-behaved competitors by penalized minimization.

Given E with small asymmetry, minimize

    P_K(U) + |A(U) - A(E)| + Λ ||U| - |K||

over star-shaped polygons inside r0 K, recentre, rescale to |K|, and check
what the minimizer is supposed to satisfy: almost-minimality, closeness to
K in gauge, and a bounded John constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely

from .anisotropy import WulffShape
from .errors import DegenerateAsymmetry, InvalidInput, NonConvergence
from .geomset import GeomSet, anisotropic_perimeter, symm_diff_volume, volume
from .isoperimetry import GOLDEN, asymmetry
from .johnmetric import estimate_john, sandwich_delta
from .whitney import whitney_decompose

J_CAP = {2: 10.0}
SANDWICH_DELTA = 0.1
GAUGE_SLACK = 1e-9      # rounding in the gauge evaluation
A_RATIO_BAND = (0.8, 1.2)
JITTER = 0.02
MAX_RAYS = 4096


@dataclass(frozen=True)
class SolverConfig:
    vertices: int = 128
    step: float = 0.02      # initial relative radial step
    max_iter: int = 80      # descent sweeps
    tol: float = 1e-6       # stop once the relative step drops below this
    energy_tol: float = 1e-9


@dataclass(frozen=True, eq=False)
class SelectionProblem:
    input_set: GeomSet
    shape: WulffShape
    lam: float | None = None
    r0: float = 10.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        n = self.shape.dim
        if self.input_set.dim != n:
            raise InvalidInput("set and Wulff shape differ in dimension")
        if not self.input_set.is_polygon:
            raise InvalidInput("selection works on polygons")
        if self.lam is None:
            object.__setattr__(self, "lam", float(n + 1))
        if not self.lam > n:
            raise InvalidInput(f"lambda must exceed n = {n}")
        if not self.r0 >= 2:
            raise InvalidInput("r0 must be at least 2")
        if self.solver.vertices < 8:
            raise InvalidInput("solver needs at least 8 vertices")

    @cached_property
    def box(self):
        """r0 K as a prepared shapely polygon."""
        g = shapely.Polygon(self.shape.vertices * self.r0)
        shapely.prepare(g)
        return g

    @cached_property
    def input_asymmetry(self):
        return asymmetry(self.input_set, self.shape)


@dataclass(frozen=True)
class Energy:
    perimeter: float
    asymmetry_term: float
    volume_term: float
    total: float
    asymmetry: float
    clipped: bool = False


def clip_to_box(U: GeomSet, P: SelectionProblem) -> tuple[GeomSet, bool]:
    g = U.shapely
    if P.box.covers(g):
        return U, False
    c = shapely.intersection(g, P.box)
    if c.geom_type != "Polygon" or c.is_empty:
        raise InvalidInput("clipped set is not a single polygon")
    ext = np.asarray(c.exterior.coords)[:-1]
    holes = [np.asarray(h.coords)[:-1] for h in c.interiors]
    if not shapely.is_ccw(c.exterior):
        ext = ext[::-1]
    holes = [h if not shapely.is_ccw(shapely.LinearRing(h)) else h[::-1] for h in holes]
    return GeomSet.polygon(ext, *holes), True


def penalized_energy(U: GeomSet, P: SelectionProblem, asym=None) -> Energy:
    U, clipped = clip_to_box(U, P)
    K = P.shape
    a = asymmetry(U, K) if asym is None else asym
    p = anisotropic_perimeter(U, K)
    at = abs(a.value - P.input_asymmetry.value)
    vt = P.lam * abs(volume(U) - K.volume)
    return Energy(p, at, vt, p + at + vt, a.value, clipped)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    minimizer_raw: GeomSet
    minimizer: GeomSet
    lambda_k: float
    energies: dict
    checks: dict
    converged: bool = True
    sweeps: int = 0

    def to_json(self) -> dict:
        return {
            "lambda_k": self.lambda_k,
            "energies": self.energies,
            "checks": self.checks,
            "converged": self.converged,
            "sweeps": self.sweeps,
            "minimizer_raw": self.minimizer_raw.loops[0].tolist(),
            "minimizer": self.minimizer.loops[0].tolist(),
        }


# -- radial model ------------------------------------------------------------

def _ray_angles(E: GeomSet, K: WulffShape, m: int) -> np.ndarray:
    th = [2 * np.pi * np.arange(m) / m]
    v = E.loops[0]
    if len(E.loops) == 1 and len(v) <= MAX_RAYS:
        th.append(np.arctan2(v[:, 1], v[:, 0]) % (2 * np.pi))
    if len(K.vertices) <= 64:
        th.append(np.arctan2(K.vertices[:, 1], K.vertices[:, 0]) % (2 * np.pi))
    th = np.sort(np.concatenate(th))
    keep = np.concatenate([[True], np.diff(th) > 1e-9])
    th = th[keep]
    if 2 * np.pi - th[-1] + th[0] <= 1e-9:
        th = th[:-1]
    return th


def radial_function(E: GeomSet, theta) -> np.ndarray:
    """Distance from 0 to ∂E along each ray (E star-shaped about 0)."""
    g = E.shapely
    if not shapely.contains_xy(g, 0.0, 0.0):
        raise InvalidInput("set is not star-shaped about its barycenter")
    R = 2 * float(np.max(np.abs(np.concatenate(E.loops)))) * math.sqrt(2) + 1
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    rays = shapely.linestrings(np.stack([np.zeros_like(u), R * u], 1))
    cut = shapely.intersection(g, rays)
    if np.any(shapely.get_num_geometries(cut) != 1):
        raise InvalidInput("set is not star-shaped about its barycenter")
    return shapely.length(cut)


class _Radial:
    """Star-shaped polygon ρ_i u_i with incremental perimeter and area."""

    def __init__(self, theta, rho, K: WulffShape):
        self.u = np.column_stack([np.cos(theta), np.sin(theta)])
        self.s = np.sin(np.diff(np.concatenate([theta, [theta[0] + 2 * np.pi]])))
        self.kv = K.vertices
        self.cap = 1.0 / K.gauge(self.u)        # ρ_i ≤ r0 · cap_i keeps U in r0 K
        self.rho = np.array(rho, dtype=float)
        self.m = len(theta)
        self.edge = self._edges(np.arange(self.m))

    def points(self, rho=None):
        rho = self.rho if rho is None else rho
        return rho[:, None] * self.u

    def _edges(self, idx, rho=None):
        rho = self.rho if rho is None else rho
        j = (idx + 1) % self.m
        e = rho[j, None] * self.u[j] - rho[idx, None] * self.u[idx]
        nrm = np.column_stack([e[:, 1], -e[:, 0]])
        return np.max(nrm @ self.kv.T, axis=1)

    def perimeter(self):
        return float(self.edge.sum())

    def area(self, rho=None):
        rho = self.rho if rho is None else rho
        return 0.5 * float(np.dot(rho * np.roll(rho, -1), self.s))

    def trial(self, i, r):
        rho = self.rho.copy()
        rho[i] = r
        idx = np.array([(i - 1) % self.m, i])
        new = self._edges(idx, rho)
        return rho, idx, new


def _polygon(pts) -> GeomSet:
    return GeomSet.polygon(pts)


def _wedge_pieces(kx, theta, R):
    """(x + K) ∩ cone_i for the cones between consecutive rays."""
    t2 = np.concatenate([theta[1:], [theta[0] + 2 * np.pi]])
    m = len(theta)
    # split each cone at its bisector so the far triangles stay convex and thin
    mid = 0.5 * (theta + t2)
    far = R / np.cos(0.5 * (t2 - theta))
    cones = np.zeros((m, 4, 2))
    cones[:, 1] = R * np.column_stack([np.cos(theta), np.sin(theta)])
    cones[:, 2] = far[:, None] * np.column_stack([np.cos(mid), np.sin(mid)])
    cones[:, 3] = R * np.column_stack([np.cos(t2), np.sin(t2)])
    return shapely.intersection(kx, shapely.polygons(cones))


def _fan_areas(pieces, pts, idx):
    """Areas of triangle(0, p_i, p_i+1) ∩ piece_i for the listed i."""
    m = len(pts)
    tri = np.zeros((len(idx), 3, 2))
    tri[:, 1] = pts[idx]
    tri[:, 2] = pts[(idx + 1) % m]
    return shapely.area(shapely.intersection(pieces[idx], shapely.polygons(tri)))


def _descent(P: SelectionProblem, theta, rho0):
    K = P.shape
    cfg = P.solver
    a_in = P.input_asymmetry.value
    model = _Radial(theta, rho0, K)
    model.rho = np.minimum(model.rho, P.r0 * model.cap)
    model.edge = model._edges(np.arange(model.m))
    kv = K.vertices
    vol_k = K.volume
    R = 4 * P.r0 * float(np.max(np.linalg.norm(kv, axis=1)))
    allidx = np.arange(model.m)

    def true_energy(rho, start):
        U = _polygon(model.points(rho))
        a = asymmetry(U, K, start=start)
        p = float(model._edges(allidx, rho).sum())
        return p + abs(a.value - a_in) + P.lam * abs(model.area(rho) - vol_k), a

    x = P.input_asymmetry.translation
    e_true, a = true_energy(model.rho, x)
    x = a.translation
    step = cfg.step
    sweeps = 0
    converged = False
    while sweeps < cfg.max_iter:
        sweeps += 1
        pieces = _wedge_pieces(shapely.Polygon(kv + x), theta, R)
        pts = model.points()
        fan = _fan_areas(pieces, pts, allidx)
        inter = float(fan.sum())
        area = model.area()
        cur = model.perimeter() + abs(area + vol_k - 2 * inter - a_in) + P.lam * abs(area - vol_k)
        saved = (model.rho.copy(), model.edge.copy())
        accepted = 0
        for i in range(model.m):
            for sgn in (1.0, -1.0):
                r = min(model.rho[i] * (1 + sgn * step), P.r0 * model.cap[i])
                if r == model.rho[i]:
                    continue
                rho, idx, new = model.trial(i, r)
                q = pts.copy()
                q[i] = r * model.u[i]
                f2 = _fan_areas(pieces, q, idx)
                it = inter - fan[idx].sum() + f2.sum()
                ar = model.area(rho)
                per = model.edge.sum() - model.edge[idx].sum() + new.sum()
                en = per + abs(ar + vol_k - 2 * it - a_in) + P.lam * abs(ar - vol_k)
                if en < cur - cfg.energy_tol * 1e-3:
                    model.rho = rho
                    model.edge[idx] = new
                    fan[idx] = f2
                    pts, inter, cur = q, it, en
                    accepted += 1
                    break
        if accepted:
            e_new, a_new = true_energy(model.rho, x)
            if e_new <= e_true + cfg.energy_tol * 1e-3:
                e_true, x = e_new, a_new.translation
            else:
                # the frozen-translation surrogate misled us; undo and refine
                model.rho, model.edge = saved
                step *= 0.5
        else:
            step *= 0.5
        if step < cfg.tol:
            converged = True
            break
    return model, sweeps, converged


def solve_selection(P: SelectionProblem, checks: bool = True, trials: int = 100, seed: int = 0,
                    john_level: int = 8) -> SelectionResult:
    K = P.shape
    n = K.dim
    E, _ = clip_to_box(P.input_set, P)
    E = E.translate(-E.barycenter())
    if E is not P.input_set:
        P = SelectionProblem(E, K, P.lam, P.r0, P.solver)
    e_in = penalized_energy(E, P, P.input_asymmetry)

    theta = _ray_angles(E, K, P.solver.vertices)
    model, sweeps, converged = _descent(P, theta, radial_function(E, theta))
    U = _polygon(model.points())
    U = U.translate(-U.barycenter())
    e_raw = penalized_energy(U, P)
    fallback = False
    if e_raw.total > e_in.total + P.solver.energy_tol:
        # resampling onto the rays cost more than the descent recovered
        U, e_raw, fallback = E, e_in, True
    lam_k = (K.volume / volume(U)) ** (1.0 / n)
    F = U.scale(lam_k)

    energies = {
        "P_K": e_raw.perimeter,
        "asymmetry_term": e_raw.asymmetry_term,
        "volume_term": e_raw.volume_term,
        "total": e_raw.total,
        "input_total": e_in.total,
        "A_input": P.input_asymmetry.value,
        "A_raw": e_raw.asymmetry,
        "P_K_final": anisotropic_perimeter(F, K),
        "fallback": fallback,
    }
    out = {}
    if checks:
        mini = minimality_spot_check(U, P, trials, seed)
        out["minimality_pass_fraction"] = mini.pass_fraction
        out["minimality_worst"] = mini.worst
        out["sandwich_delta"] = sandwich_check(F, K)
        W = whitney_decompose(F, john_level)
        out["J_estimate"] = estimate_john(F, np.zeros(n), W).J_value
        a_f = asymmetry(F, K)
        out["A_final"] = a_f.value
        if a_f.value > 1e-6 * K.volume:
            out["qwi_value"] = (energies["P_K_final"] - n * K.volume) / a_f.value ** 2
        else:
            out["qwi_value"] = math.nan
        out["barycenter_raw"] = float(np.linalg.norm(U.barycenter()))
        out["volume_error"] = abs(volume(F) - K.volume) / K.volume
    return SelectionResult(U, F, lam_k, energies, out, converged, sweeps)


def require_converged(res: SelectionResult) -> SelectionResult:
    if not res.converged:
        raise NonConvergence(f"descent stopped after {res.sweeps} sweeps above tolerance")
    return res


# -- checks --------------------------------------------------------------------

@dataclass(frozen=True)
class MinimalityReport:
    trials: int
    passed: int
    worst: float         # min over trials of P_K(U) + (Λ+1)|UΔF| - P_K(F)

    @property
    def pass_fraction(self) -> float:
        return self.passed / self.trials if self.trials else 1.0


def minimality_gap(F: GeomSet, U: GeomSet, P: SelectionProblem) -> float:
    """P_K(U) + (Λ+1)|UΔF| - P_K(F); nonnegative for an almost-minimizer."""
    K = P.shape
    return anisotropic_perimeter(U, K) + (P.lam + 1) * symm_diff_volume(U, F) - anisotropic_perimeter(F, K)


def jitter(F: GeomSet, rng: np.random.Generator, amplitude: float = JITTER, r_frac=(0.1, 0.5)):
    """Radial jitter of the vertices of F near a random vertex; returns (U, x, r)."""
    v = F.loops[0]
    x = v[rng.integers(len(v))]
    scale = math.sqrt(abs(F.signed_area_sum()))
    r = rng.uniform(*r_frac) * scale
    d = np.linalg.norm(v - x, axis=1)
    w = np.clip(1 - d / r, 0.0, None)
    xi = rng.uniform(-1.0, 1.0, len(v))
    U = GeomSet.polygon(v * (1 + amplitude * xi * w)[:, None], *F.loops[1:])
    return U, x, r


def minimality_spot_check(F: GeomSet, P: SelectionProblem, trials: int = 100, seed: int = 0,
                          tol: float = 1e-9) -> MinimalityReport:
    rng = np.random.default_rng(seed)
    passed, worst = 0, math.inf
    for _ in range(trials):
        U, _, _ = jitter(F, rng)
        g = minimality_gap(F, U, P)
        worst = min(worst, g)
        passed += g >= -tol
    return MinimalityReport(trials, passed, worst)


def sandwich_check(F: GeomSet, K: WulffShape) -> float:
    return max(sandwich_delta(F, K))


# -- dilate scan ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DilateScan:
    lam: float
    r_min: float
    h_min: float
    at_edge: bool
    r: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)


def dilate_energy(K: WulffShape, lam: float, r: float) -> float:
    """(P_K(rK) + Λ||rK| - |K||)/|K| from the actual polygon rK."""
    U = GeomSet.from_shape(K, scale=r)
    return (anisotropic_perimeter(U, K) + lam * abs(volume(U) - K.volume)) / K.volume


def dilate_scan(K: WulffShape, lam: float, r_lo: float = 0.05, r_hi: float = 2.0, count: int = 391,
                tol: float = 1e-9) -> DilateScan:
    """Scan h(r) over dilates rK, then refine the best grid point by golden section."""
    rs = np.linspace(r_lo, r_hi, count)
    hs = np.array([dilate_energy(K, lam, r) for r in rs])
    k = int(np.argmin(hs))
    a, b = rs[max(k - 1, 0)], rs[min(k + 1, count - 1)]
    phi = lambda r: dilate_energy(K, lam, r)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = phi(d)
    r, h = (c, fc) if fc <= fd else (d, fd)
    if hs[k] < h:
        r, h = float(rs[k]), float(hs[k])
    return DilateScan(lam, float(r), float(h), k in (0, count - 1), rs, hs)


# -- pipeline -------------------------------------------------------------------

def qwi_pipeline(E_family, K: WulffShape, deltas=None, J_cap: float | None = None,
                 trials: int = 100, seed: int = 0, solver: SolverConfig | None = None) -> list[dict]:
    """Run the selection on each member; one row of checks per member."""
    n = K.dim
    J_cap = J_CAP.get(n, 10.0) if J_cap is None else J_cap
    solver = SolverConfig() if solver is None else solver
    rows = []
    for k, E in enumerate(E_family):
        delta = SANDWICH_DELTA if deltas is None else deltas[k]
        row = {"k": k}
        try:
            P = SelectionProblem(E, K, solver=solver)
            a_e = P.input_asymmetry.value
            if a_e <= 1e-6 * K.volume:
                raise DegenerateAsymmetry(f"A(E_{k}) = {a_e:.3g}")
            res = solve_selection(P, trials=trials, seed=seed)
        except (DegenerateAsymmetry, InvalidInput) as exc:
            row.update(error=type(exc).__name__, message=str(exc), ok=False)
            rows.append(row)
            continue
        c = res.checks
        a_ratio = res.energies["A_raw"] / a_e
        row.update(
            energy_raw=res.energies["total"],
            energy_input=res.energies["input_total"],
            A_input=a_e,
            A_raw=res.energies["A_raw"],
            A_ratio=a_ratio,
            A_ratio_ok=bool(A_RATIO_BAND[0] <= a_ratio <= A_RATIO_BAND[1]),
            input_ratio=(anisotropic_perimeter(P.input_set, K) - n * K.volume) / a_e ** 2,
            alpha=c["qwi_value"],
            volume_error=c["volume_error"],
            barycenter=c["barycenter_raw"],
            sandwich=c["sandwich_delta"],
            minimality=c["minimality_pass_fraction"],
            J=c["J_estimate"],
            converged=res.converged,
        )
        row["ok"] = bool(
            row["energy_raw"] <= row["energy_input"] + 1e-6
            and row["volume_error"] <= 1e-9
            and row["barycenter"] <= 1e-6
            and row["sandwich"] <= delta + GAUGE_SLACK
            and row["minimality"] == 1.0
            and row["J"] <= J_cap
        )
        rows.append(row)
    return rows
