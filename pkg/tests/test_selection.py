import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wulfflab import fixtures
from wulfflab.anisotropy import disc
from wulfflab.errors import InvalidInput, NonConvergence
from wulfflab.geomset import GeomSet, anisotropic_perimeter, rasterize, symm_diff_volume, volume
from wulfflab.isoperimetry import asymmetry
from wulfflab.johnmetric import estimate_john
from wulfflab.selection import (SelectionProblem, SolverConfig, clip_to_box, dilate_energy, dilate_scan, jitter,
                                minimality_gap, minimality_spot_check, penalized_energy, qwi_pipeline,
                                require_converged, sandwich_check, solve_selection)
from wulfflab.whitney import whitney_decompose


@pytest.fixture(scope="module")
def B():
    return disc(256)


@pytest.fixture(scope="module")
def ellipse_run(B):
    E = fixtures.ellipse(0.05, B)
    return E, solve_selection(SelectionProblem(E, B))


def _spike(K, k=10, area=1e-3):
    """K with a thin triangular spike of the given area on edge k."""
    v = K.vertices
    a, b = v[k], v[k + 1]
    w = 0.1 * np.linalg.norm(b - a)
    mid = (a + b) / 2
    tip = mid + (2 * area / w) * mid / np.linalg.norm(mid)
    return GeomSet.polygon(np.vstack([v[:k + 1], a + 0.45 * (b - a), tip, a + 0.55 * (b - a), v[k + 1:]]))


# -- energy -----------------------------------------------------------------------

def test_energy_of_K(B):
    K = GeomSet.from_shape(B)
    e = penalized_energy(K, SelectionProblem(K, B))
    assert e.total == pytest.approx(2 * B.volume, rel=1e-12)
    assert e.perimeter == pytest.approx(2 * B.volume, rel=1e-12)
    assert e.asymmetry_term <= 1e-12 and e.volume_term <= 1e-12


def test_energy_additivity(B):
    E = fixtures.ellipse(0.1, B)
    P = SelectionProblem(E, B)
    e = penalized_energy(GeomSet.from_shape(B), P)
    assert e.total == pytest.approx(2 * B.volume + P.input_asymmetry.value, abs=1e-9)


@pytest.mark.parametrize("t", [0.97, 0.99, 1.02])
def test_energy_of_dilates(B, t):
    K = GeomSet.from_shape(B)
    P = SelectionProblem(K, B)
    e = penalized_energy(K.scale(t), P)
    # the translation x = 0 is optimal, so A(tK) = |K| |t^n - 1|
    closed = 2 * B.volume * t + B.volume * abs(t * t - 1) + P.lam * B.volume * abs(t * t - 1)
    assert e.total == pytest.approx(closed, abs=1e-3)
    assert e.asymmetry == pytest.approx(B.volume * abs(t * t - 1), abs=1e-6)


def test_clip_to_box(B):
    P = SelectionProblem(GeomSet.from_shape(B), B, r0=2.0)
    big = GeomSet.from_shape(B).scale(3.0)
    U, clipped = clip_to_box(big, P)
    assert clipped and volume(U) == pytest.approx(4 * B.volume, rel=1e-9)
    assert clip_to_box(GeomSet.from_shape(B), P)[1] is False


def test_problem_validation(B):
    E = GeomSet.from_shape(B)
    with pytest.raises(InvalidInput):
        SelectionProblem(E, B, lam=2.0)
    with pytest.raises(InvalidInput):
        SelectionProblem(E, B, r0=1.5)
    with pytest.raises(InvalidInput):
        SelectionProblem(rasterize(E, 1 / 32), B)
    assert SelectionProblem(E, B).lam == 3.0


# -- solver -------------------------------------------------------------------------

def test_fixed_point_K(B):
    K = GeomSet.from_shape(B)
    res = solve_selection(SelectionProblem(K, B), trials=20)
    assert res.energies["total"] == pytest.approx(2 * B.volume, rel=1e-9)
    assert symm_diff_volume(res.minimizer, K) <= 1e-9
    assert res.checks["minimality_pass_fraction"] == 1.0


def test_ellipse_selection(B, ellipse_run):
    E, res = ellipse_run
    assert res.energies["total"] <= res.energies["input_total"] + 1e-6
    assert res.checks["sandwich_delta"] <= 0.1
    J_E = estimate_john(E, (0, 0), whitney_decompose(E, 8)).J_value
    assert res.checks["J_estimate"] <= J_E + 0.5
    assert res.checks["minimality_pass_fraction"] == 1.0


def test_rescaling_identities(B, ellipse_run):
    _, res = ellipse_run
    F, U, lam = res.minimizer, res.minimizer_raw, res.lambda_k
    assert volume(F) == pytest.approx(B.volume, rel=1e-12)
    assert anisotropic_perimeter(F, B) == pytest.approx(lam * anisotropic_perimeter(U, B), rel=1e-12)
    assert np.linalg.norm(U.barycenter()) <= 1e-6


def test_spike_is_removed():
    B = disc(128)
    S = _spike(B)
    assert volume(S) - B.volume == pytest.approx(1e-3, rel=1e-9)
    P = SelectionProblem(S, B)
    res = solve_selection(P, trials=20, john_level=6)
    drop = anisotropic_perimeter(S, B) - res.energies["P_K"]
    assert drop > (P.lam + 1) * 1e-3
    assert np.max(np.linalg.norm(res.minimizer_raw.loops[0], axis=1)) < 1.01
    assert res.checks["minimality_pass_fraction"] == 1.0
    assert res.checks["sandwich_delta"] <= 0.1


@settings(max_examples=4)
@given(st.integers(0, 10_000))
def test_energy_never_increases(seed):
    K = fixtures.wulff_corpus()["square"]
    E = fixtures.random_star_corpus(1, seed, rmin=0.8, rmax=1.2)[0]
    P = SelectionProblem(E, K, solver=SolverConfig(vertices=32, max_iter=10))
    res = solve_selection(P, checks=False)
    assert res.energies["total"] <= res.energies["input_total"] + P.solver.energy_tol
    assert volume(res.minimizer) == pytest.approx(K.volume, rel=1e-12)


def test_non_convergence_is_reported(B):
    E = fixtures.ellipse(0.1, B)
    res = solve_selection(SelectionProblem(E, B, solver=SolverConfig(max_iter=1)), checks=False)
    assert not res.converged
    with pytest.raises(NonConvergence):
        require_converged(res)


def test_triangle_inequality_of_index(B):
    E = fixtures.ellipse(0.1, B)
    a_e = asymmetry(E, B).value
    rng = np.random.default_rng(5)
    for _ in range(5):
        U, _, _ = jitter(E, rng, amplitude=0.05)
        assert abs(asymmetry(U, B).value - a_e) <= symm_diff_volume(U, E) + 2e-3 * B.volume


# -- checks ---------------------------------------------------------------------------

def test_minimality_trivial_and_hole(B):
    F = GeomSet.from_shape(B)
    P = SelectionProblem(F, B)
    assert minimality_gap(F, F, P) == pytest.approx(0, abs=1e-12)
    for rho in (1e-3, 1e-2, 0.1):
        th = -2 * np.pi * np.arange(256) / 256
        hole = rho * np.column_stack([np.cos(th), np.sin(th)]) + [0.2, 0.1]
        U = GeomSet.polygon(F.loops[0], hole)
        g = minimality_gap(F, U, P)
        assert g >= 0
        closed = 2 * math.pi * rho + (P.lam + 1) * math.pi * rho ** 2
        assert g == pytest.approx(closed, rel=1e-3)


def test_jitter_on_the_disc(B):
    F = GeomSet.from_shape(B)
    rep = minimality_spot_check(F, SelectionProblem(F, B), trials=100, seed=0)
    assert rep.pass_fraction == 1.0


def test_sandwich_check(B):
    F = GeomSet.from_shape(B)
    assert sandwich_check(F, B) == pytest.approx(0, abs=1e-12)
    assert sandwich_check(F.scale(1.05), B) == pytest.approx(0.05, abs=1e-9)
    v = B.vertices.copy()
    v[3] *= 1.08
    assert sandwich_check(GeomSet.polygon(v), B) == pytest.approx(0.08, abs=1e-6)


# -- dilates and pipeline -------------------------------------------------------------

@given(st.floats(0.05, 2.0), st.floats(2.1, 6.0))
def test_dilate_energy_closed_form(r, lam):
    K = fixtures.wulff_corpus()["hexagon"]
    assert dilate_energy(K, lam, r) == pytest.approx(2 * r + lam * abs(r * r - 1), rel=1e-12)


def test_dilate_threshold(B):
    up = dilate_scan(B, 3.0)
    assert abs(up.r_min - 1) <= 1e-6 and not up.at_edge
    down = dilate_scan(B, 1.5)
    assert abs(down.r_min - 1) > 1e-6


def test_pipeline_degenerate(B):
    rows = qwi_pipeline([GeomSet.from_shape(B)] * 2, B)
    assert all(r["error"] == "DegenerateAsymmetry" and not r["ok"] for r in rows)


def test_pipeline_bumped_square():
    K = fixtures.wulff_corpus()["square"]
    rows = qwi_pipeline([fixtures.bumped_square(0.04, K)], K, trials=30)
    r = rows[0]
    assert r["ok"], r
    assert r["sandwich"] <= 0.1 and r["minimality"] == 1.0
