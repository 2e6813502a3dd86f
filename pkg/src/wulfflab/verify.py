"""Acceptance suites: each criterion runs at its stated tolerance and time budget."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fixtures
from .errors import UnknownSuite
from .geomset import GeomSet, anisotropic_perimeter
from .isoperimetry import asymmetry, qwi_sweep, wulff_margin
from .johnmetric import estimate_john
from .oracles import brute_force_asymmetry
from .selection import GAUGE_SLACK, dilate_scan, qwi_pipeline
from .tracelab import (chain_soundness, default_suite, linear, radial_bump, random_boundary_points,
                       trace_constant)
from .whitney import C2D, certify, overlap_multiplicity, whitney_decompose


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float
    budget: float
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed and self.seconds < self.budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        why = "" if self.passed else " (assertion)"
        if self.passed and not self.ok:
            why = " (time budget)"
        return f"criterion {self.number} {self.name}: {tag}{why} [{self.seconds:.1f} s / {self.budget:.0f} s]"

    def to_json(self) -> dict:
        # wall time stays out so reports are reproducible byte for byte
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "budget_seconds": self.budget, "details": self.details}


def _timed(number, name, budget, fn, *args):
    t = time.perf_counter()
    passed, details = fn(*args)
    return CriterionResult(number, name, bool(passed), time.perf_counter() - t, budget, details)


# -- criteria ---------------------------------------------------------------------

def _equality_case(seed):
    out, ok = {}, True
    for name, K in fixtures.wulff_corpus().items():
        t = time.perf_counter()
        p = anisotropic_perimeter(GeomSet.from_shape(K), K)
        err = abs(p - K.dim * K.volume) / (K.dim * K.volume)
        dt = time.perf_counter() - t
        out[name] = {"P_K": p, "rel_err": err, "under_1s": dt < 1.0}
        ok &= err <= 1e-3 and dt < 1.0
    return ok, out


def _wulff_inequality(seed):
    corpus = fixtures.wulff_corpus()
    out, ok = {}, True
    for name in ("disc", "square"):
        K = corpus[name]
        floor = -1e-6 * K.dim * K.volume
        polys = fixtures.random_star_corpus(1000, seed)
        m = np.array([wulff_margin(E, K) for E in polys])
        out[name] = {"min_margin": float(m.min()), "floor": floor, "violations": int(np.sum(m < floor))}
        ok &= bool(np.all(m >= floor))
    return ok, out


def _whitney_exactness(seed):
    out, ok = {}, True
    for name in ("square", "disc", "l_shape", "cusp"):
        om = fixtures.domain(name)
        W = whitney_decompose(om, 10)
        rep = certify(W, om)
        mult = overlap_multiplicity(W, seed=seed)
        good = rep.ok and abs(rep.coverage_defect) <= 1e-9 and mult == C2D
        out[name] = {"cubes": rep.cubes, "certified": rep.passed, "ratio_failures": len(rep.ratio_failures),
                     "coverage_defect": rep.coverage_defect, "multiplicity": mult}
        ok &= good
    out["C2D"] = C2D
    return ok, out


def _john_value(name, level):
    om = fixtures.domain(name)
    W = whitney_decompose(om, level)
    return estimate_john(om, fixtures.DOMAIN_CENTERS[name], W).J_value


def _john_discrimination(seed):
    d = _john_value("disc", 10)
    s = _john_value("square", 10)
    cusp = [_john_value("cusp", lv) for lv in (8, 10, 12)]
    increasing = all(b > a for a, b in zip(cusp, cusp[1:]))
    ok = 1.0 <= d <= 1.25 and s <= 3.0 and increasing and cusp[-1] / cusp[0] >= 2.0
    return ok, {"disc": d, "square": s, "cusp": dict(zip((8, 10, 12), cusp)),
                "cusp_growth": cusp[-1] / cusp[0]}


def _asymmetry_oracle(seed, count=50):
    corpus = fixtures.wulff_corpus()
    shapes = [corpus["square"], corpus["hexagon"]]
    polys = fixtures.random_star_corpus(count, seed)
    worst, rows = 0.0, []
    for k, E in enumerate(polys):
        K = shapes[k % 2]
        a = asymmetry(E, K)
        step = K.volume ** 0.5 / 200
        center = None
        # exhaustive at the fine step over a window that follows the minimizer
        for _ in range(8):
            b, x, edge = brute_force_asymmetry(E, K, step, center, 0.25 * K.volume ** 0.5)
            if not edge:
                break
            center = x
        err = abs(a.value - b) / K.volume
        worst = max(worst, err)
        rows.append({"optimizer": a.value, "brute": b, "rel_err": err})
    return worst <= 1e-3, {"worst_rel_err": worst, "polygons": count}


def _trace_behaviour(seed):
    out = {}
    Ws = {}
    ok = True
    for name in ("disc", "square"):
        om = fixtures.domain(name)
        x0 = fixtures.DOMAIN_CENTERS[name]
        suite = default_suite(om, 20, seed)
        c = {}
        for lv in (8, 10):
            Ws[name, lv] = W = whitney_decompose(om, lv)
            c[lv] = trace_constant(om, suite, W, x0).c_emp
        var = abs(c[10] - c[8]) / c[8]
        out[name] = {"c_emp": c, "variation": var}
        ok &= var <= 0.10
    disc = fixtures.domain("disc")
    r = trace_constant(disc, [linear([1.0, 0.0])], Ws["disc", 10], (0.0, 0.0)).c_emp
    out["disc_x1_ratio"] = r
    ok &= abs(r / (4 / math.pi) - 1) <= 0.02

    cusp = fixtures.domain("cusp")
    x0 = fixtures.DOMAIN_CENTERS["cusp"]
    Wc = whitney_decompose(cusp, 12)
    ratios = [trace_constant(cusp, [radial_bump((0.0, 0.0), 2.0 ** -j)], Wc, x0).c_emp for j in (1, 2, 3)]
    out["cusp_concentrating"] = ratios
    ok &= all(b > a for a, b in zip(ratios, ratios[1:]))

    sound = {}
    for name, W in (("disc", Ws["disc", 10]), ("square", Ws["square", 10]), ("cusp", Wc)):
        om = W.domain
        x0 = fixtures.DOMAIN_CENTERS[name]
        pts = random_boundary_points(om, 100, seed)
        lo, hi = om.bounds()
        worst = -math.inf
        for u in (linear([0.0, 1.0]), radial_bump(x0, 0.5 * float(np.max(hi - lo)))):
            rep = chain_soundness(u, W, x0, pts)
            worst = max(worst, rep.worst_margin)
            ok &= rep.ok
        sound[name] = worst
    out["soundness_worst_margin"] = sound
    return ok, out


def _qwi_positivity(seed):
    K = fixtures.wulff_corpus()["disc"]
    rows = qwi_sweep([(t, fixtures.ellipse(t, K)) for t in (0.2, 0.1, 0.05, 0.025)], K)
    r = np.array([row["ratio"] for row in rows])
    ok = bool(np.all(r > 0) and r.max() / r.min() <= 2)
    return ok, {"ratios": r.tolist(), "infimum": float(r.min()), "spread": float(r.max() / r.min())}


def _selection_pipeline(seed):
    corpus = fixtures.wulff_corpus()
    out, ok = {}, True
    fams = {
        "ellipse": (corpus["disc"], [fixtures.ellipse(0.2 / 2 ** k, corpus["disc"]) for k in range(1, 5)]),
        "bumped_square": (corpus["square"],
                          [fixtures.bumped_square(0.08 / 2 ** k, corpus["square"]) for k in range(4)]),
    }
    for name, (K, fam) in fams.items():
        rows = qwi_pipeline(fam, K, seed=seed)
        out[name] = rows
        ok &= all(r.get("ok", False) for r in rows)
    disc = corpus["disc"]
    up = dilate_scan(disc, disc.dim + 1.0)
    down = dilate_scan(disc, disc.dim - 0.5)
    out["dilate"] = {"lambda_above": up.lam, "r_min_above": up.r_min,
                     "lambda_below": down.lam, "r_min_below": down.r_min, "below_at_scan_edge": down.at_edge}
    ok &= abs(up.r_min - 1) <= 1e-6 and abs(down.r_min - 1) > 1e-6
    out["gauge_slack"] = GAUGE_SLACK
    return ok, out


CRITERIA = {
    1: ("wulff equality case", 3.0, _equality_case),
    2: ("wulff inequality", 60.0, _wulff_inequality),
    3: ("whitney exactness", 30.0, _whitney_exactness),
    4: ("john discrimination", 60.0, _john_discrimination),
    5: ("asymmetry oracle", 120.0, _asymmetry_oracle),
    6: ("trace constant", 120.0, _trace_behaviour),
    7: ("qwi positivity", 60.0, _qwi_positivity),
    8: ("selection pipeline", 300.0, _selection_pipeline),
}

SUITES = {
    "wulff": (1, 2, 3),
    "whitney": (3,),
    "john": (4,),
    "trace": (6,),
    "qwi": (5, 7),
    "selection": (8,),
    "all": tuple(range(1, 9)),
}


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    name, budget, fn = CRITERIA[number]
    return _timed(number, name, budget, fn, seed)


def run_suite(name: str, seed: int = 0, workers: int = 1) -> list[CriterionResult]:
    """Run the criteria of a suite; with workers > 1 they run in separate processes."""
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    nums = SUITES[name]
    if workers <= 1 or len(nums) == 1:
        return [run_criterion(k, seed) for k in nums]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(nums))) as ex:
        return list(ex.map(run_criterion, nums, [seed] * len(nums)))
