import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wulfflab import fixtures
from wulfflab.errors import InvalidInput, UndersampledCube, Unreachable
from wulfflab.tracelab import (ScalarField, chain_soundness, chain_sum_bound, chain_to_boundary, constant, cube_averages,
                               dist_to_boundary, gradient_l1, l1_deviation, linear, load_suite,
                               poincare_constant, radial_bump, random_boundary_points, trace_constant,
                               trace_eval, weighted_median)
from wulfflab.whitney import whitney_decompose


@pytest.fixture(scope="module")
def square8():
    om = fixtures.unit_square()
    return om, whitney_decompose(om, 8)


@pytest.fixture(scope="module")
def disc8():
    om = fixtures.unit_disc()
    return om, whitney_decompose(om, 8)


def _finest(W):
    return W.base_scale * 2.0 ** -W.max_level


def test_poincare_constant():
    assert poincare_constant(2) == pytest.approx(2 * 1.1 * math.sqrt(2))


def test_cube_averages(square8):
    _, W = square8
    assert np.all(cube_averages(constant(7.0), W).values == 7.0)
    np.testing.assert_allclose(cube_averages(linear([1, 0]), W).values, W.centers()[:, 0], atol=1e-12)
    s = 1.1 * W.sides()
    exact = W.centers()[:, 0] ** 2 + s ** 2 / 12
    got = cube_averages(ScalarField("x1^2", lambda p: p[:, 0] ** 2), W, q=8).values
    # midpoint rule on q points per side misses s^2 / (12 q^2) of the second moment
    np.testing.assert_allclose(got, exact - s ** 2 / (12 * 64), atol=1e-12)
    with pytest.raises(UndersampledCube):
        cube_averages(constant(1.0), W, q=3)


def test_chain_lengths_grow_with_level():
    om = fixtures.unit_square()
    lens = []
    for lv in (6, 8, 10):
        lens.append(len(chain_to_boundary(whitney_decompose(om, lv), (0.5, 0.0), (0.5, 0.5))))
    assert lens[0] < lens[1] < lens[2]
    # logarithmic: about one cube per dyadic level
    assert lens[2] - lens[1] <= 6


def test_chain_halving_sides(square8):
    _, W = square8
    ch = chain_to_boundary(W, (0.5, 0.0), (0.5, 0.5))
    r = ch.sides[1:] / ch.sides[:-1]
    assert np.all((r >= 0.25) & (r <= 1.0))
    assert ch.sides[-1] <= 4 * _finest(W)


def test_cusp_chain_longer_than_square():
    sq = len(chain_to_boundary(whitney_decompose(fixtures.unit_square(), 10), (0.5, 0.0), (0.5, 0.5)))
    cusp = fixtures.cusp()
    Wc = whitney_decompose(cusp, 10)
    tip = chain_to_boundary(Wc, (2.0 ** -4, 2.0 ** -8), fixtures.DOMAIN_CENTERS["cusp"])
    assert len(tip) > 2 * sq


def test_unreachable(square8):
    _, W = square8
    with pytest.raises(Unreachable):
        chain_to_boundary(W, (5.0, 5.0), (0.5, 0.5))


def test_trace_of_constant(square8):
    _, W = square8
    tv = trace_eval(constant(3.0), W, (0.5, 0.0), (0.5, 0.5))
    assert tv.value == 3.0 and tv.oscillation == 0.0
    assert chain_sum_bound(constant(3.0), W, (0.5, 0.0), (0.5, 0.5)) == 0.0


@pytest.mark.parametrize("ang", [0.1, 1.3, 2.9, 4.4])
def test_trace_of_linear_on_disc(disc8, ang):
    _, W = disc8
    x = np.array([math.cos(ang), math.sin(ang)])
    tv = trace_eval(linear([1, 0]), W, x, (0, 0))
    assert abs(tv.value - x[0]) <= 2 * _finest(W)


def test_trace_at_square_corner(square8):
    _, W = square8
    tv = trace_eval(linear([1, 0]), W, (1.0, 1.0), (0.5, 0.5))
    assert abs(tv.value - 1.0) <= 2 * _finest(W)


def test_trace_linearity(disc8):
    _, W = disc8
    x = (math.cos(0.7), math.sin(0.7))
    u, v = radial_bump((0.2, 0.1), 0.9), linear([0.3, -1.2], 0.5)
    a, b = 2.5, -0.75
    lhs = trace_eval(a * u + b * v, W, x, (0, 0)).value
    rhs = a * trace_eval(u, W, x, (0, 0)).value + b * trace_eval(v, W, x, (0, 0)).value
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_chain_bound_geometric_series():
    for lv in (6, 8):
        W = whitney_decompose(fixtures.unit_square(), lv)
        u = linear([0, 1])
        tv = trace_eval(u, W, (0.5, 0.0), (0.5, 0.5))
        diff = abs(tv.value - tv.start_average)
        # the start average is the center height of a cube holding x0, the trace is ~0
        ch = chain_to_boundary(W, (0.5, 0.0), (0.5, 0.5))
        assert abs(tv.start_average - 0.5) <= ch.sides[0] / 2
        assert abs(tv.value) <= 2 * _finest(W)
        assert diff == pytest.approx(tv.start_average - tv.value, abs=1e-12)
        assert chain_sum_bound(u, W, (0.5, 0.0), (0.5, 0.5), ch) >= diff


def test_chain_soundness_with_distance_field(disc8):
    om, W = disc8
    pts = random_boundary_points(om, 100, seed=3)
    rep = chain_soundness(dist_to_boundary(om), W, (0, 0), pts)
    assert rep.ok and rep.checked == 100


def test_suite_of_constants(square8):
    om, W = square8
    rep = trace_constant(om, [constant(1.0), constant(-2.0)], W, (0.5, 0.5), boundary_samples=200)
    assert rep.c_emp == 0.0


def test_disc_x1_ratio(disc8):
    om, W = disc8
    r = trace_constant(om, [linear([1, 0])], W, (0, 0)).c_emp
    assert r == pytest.approx(4 / math.pi, rel=0.02)


def test_median_optimality(disc8):
    om, W = disc8
    rep = trace_constant(om, [radial_bump((0.5, 0.2), 0.7), linear([1, 2], 0.3)], W, (0, 0),
                         boundary_samples=300)
    for r in rep.reports:
        tu, w = r.boundary_samples[:, 2], r.weights
        base = l1_deviation(tu, w, r.median)
        for dc in (-1e-3, 1e-3):
            assert l1_deviation(tu, w, r.median + dc) >= base - 1e-15


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50), st.integers(0, 1000))
def test_weighted_median_minimizes_l1(vals, seed):
    w = np.random.default_rng(seed).uniform(0.1, 2.0, len(vals))
    m = weighted_median(vals, w)
    base = l1_deviation(vals, w, m)
    for c in np.concatenate([vals, np.linspace(-101, 101, 21)]):
        assert l1_deviation(vals, w, c) >= base - 1e-9 * (1 + base)


def test_gradient_l1_linear_field():
    om = fixtures.l_shape()
    assert gradient_l1(linear([3.0, 4.0]), om) == pytest.approx(5 * 0.75, rel=1e-3)
    assert gradient_l1(dist_to_boundary(om), om) == pytest.approx(0.75)


def test_load_suite(tmp_path, square8):
    om, _ = square8
    p = tmp_path / "suite.json"
    p.write_text(json.dumps({"fields": [{"kind": "constant", "value": 2},
                                        {"kind": "linear", "a": [1, 0], "b": 1},
                                        {"kind": "radial_bump", "center": [0.5, 0.5], "scale": 0.3},
                                        {"kind": "dist_to_boundary"}]}))
    suite = load_suite(p, om)
    assert [u.spec["kind"] for u in suite] == ["constant", "linear", "radial_bump", "dist_to_boundary"]
    assert suite[1]([[2.0, 5.0]])[0] == 3.0
    p.write_text(json.dumps([{"kind": "mystery"}]))
    with pytest.raises(InvalidInput):
        load_suite(p, om)
