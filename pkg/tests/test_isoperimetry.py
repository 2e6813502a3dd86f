import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wulfflab import fixtures
from wulfflab.anisotropy import disc
from wulfflab.errors import DegenerateAsymmetry
from wulfflab.geomset import GeomSet, symm_diff_volume, volume
from wulfflab.isoperimetry import (asymmetry, deficit, qwi_ratio, qwi_sweep, renormalize, wulff_margin,
                                   write_sweep_csv)
from wulfflab.oracles import brute_force_asymmetry

# exhaustive grid search, step sqrt(pi)/200 over the whole window
SQUARE_VS_DISC_BRUTE = 0.5689171010953269


@pytest.fixture(scope="module")
def B():
    return disc(1024)


def test_asymmetry_of_K_is_zero(corpus):
    for K in corpus.values():
        a = asymmetry(GeomSet.from_shape(K), K)
        assert a.value <= 1e-12
        np.testing.assert_allclose(a.translation, 0, atol=1e-6)


def test_asymmetry_finds_translation(corpus):
    K = corpus["hexagon"]
    a = asymmetry(GeomSet.from_shape(K).translate([0.3, -0.7]), K)
    assert a.value <= 1e-4 * K.volume
    np.testing.assert_allclose(a.translation, [0.3, -0.7], atol=1e-4)


def test_square_vs_disc_against_oracles(B):
    h = math.sqrt(math.pi) / 2
    sq = GeomSet.polygon([[-h, -h], [h, -h], [h, h], [-h, h]])
    a = asymmetry(sq, B)
    assert abs(a.value - SQUARE_VS_DISC_BRUTE) <= 1e-3 * B.volume
    assert a.value <= SQUARE_VS_DISC_BRUTE + 1e-9
    # exact circle: four circular segments outside the square, counted twice
    seg = math.acos(h) - h * math.sqrt(1 - h * h)
    assert a.value == pytest.approx(8 * seg, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_asymmetry_against_brute_force(seed, corpus):
    K = corpus["square"]
    E = fixtures.random_star_corpus(1, 100 + seed)[0]
    a = asymmetry(E, K)
    b, _, _ = brute_force_asymmetry(E, K, K.volume ** 0.5 / 100)
    assert a.value <= b + 1e-9
    assert a.value >= b - 1e-3 * K.volume


@settings(max_examples=20)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_asymmetry_translation_invariant(x, y):
    K = fixtures.wulff_corpus()["square"]
    E = fixtures.l_shape().scale(2.0)
    a0 = asymmetry(E, K).value
    assert asymmetry(E.translate([x, y]), K).value == pytest.approx(a0, abs=1e-4 * K.volume)


def test_asymmetry_triangle_inequality(corpus):
    K = corpus["hexagon"]
    polys = fixtures.random_star_corpus(6, 7)
    A = [asymmetry(E, K).value for E in polys]
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            assert abs(A[i] - A[j]) <= symm_diff_volume(polys[i], polys[j]) + 2e-3 * K.volume


def test_deficit_equality_and_scaling(corpus):
    for K in corpus.values():
        E = GeomSet.from_shape(K)
        assert abs(deficit(E, K).deficit) <= 1e-6
        assert abs(deficit(E.scale(3.7), K).deficit) <= 1e-6


def test_deficit_rectangle_closed_form(B):
    E = GeomSet.polygon([[-1, -0.25], [1, -0.25], [1, 0.25], [-1, 0.25]])
    d = deficit(E, B).deficit
    assert d == pytest.approx(5 / (2 * math.sqrt(math.pi)) - 1, abs=1e-4)
    # exact for the polygonal ball: the support value on the axes is its circumradius
    R = float(np.max(B.vertices[:, 0]))
    assert d == pytest.approx(5 * R / (2 * math.sqrt(B.volume)) - 1, rel=1e-12)


def test_margin_examples(B):
    E = GeomSet.from_shape(B)
    assert abs(wulff_margin(E, B)) <= 1e-6 * 2 * B.volume
    two = GeomSet.polygon(B.vertices - [2, 0], B.vertices + [2, 0])
    assert wulff_margin(two, B) == pytest.approx(2 * B.volume * (2 - math.sqrt(2)), rel=1e-12)
    assert wulff_margin(two, B) == pytest.approx(2 * math.pi * (2 - math.sqrt(2)), abs=1e-3)


@given(st.integers(0, 10_000), st.sampled_from(["disc", "square", "hexagon"]))
def test_wulff_inequality_on_random_polygons(seed, name):
    K = fixtures.wulff_corpus()[name]
    E = fixtures.random_star_corpus(1, seed)[0]
    assert wulff_margin(E, K) >= -1e-6 * 2 * K.volume
    assert deficit(E, K).deficit >= -1e-6


def test_qwi_degenerate(B):
    with pytest.raises(DegenerateAsymmetry):
        qwi_ratio(GeomSet.from_shape(B), B)


def test_renormalize_volume(B):
    E = renormalize(fixtures.ellipse(0.3).scale(2.0), B)
    assert volume(E) == pytest.approx(B.volume, rel=1e-12)


def test_qwi_ellipse_family(B):
    r = [qwi_ratio(fixtures.ellipse(t, B), B) for t in (0.05, 0.1, 0.2)]
    assert min(r) > 0
    assert max(r) / min(r) <= 1.25


def test_qwi_bumped_square(corpus):
    K = corpus["square"]
    for t in (0.05, 0.1):
        assert qwi_ratio(fixtures.bumped_square(t, K), K) > 0


def test_sweep_rows_and_csv(B):
    rows = qwi_sweep([(0.1, fixtures.ellipse(0.1, B)), (0.0, GeomSet.from_shape(B))], B)
    assert rows[0]["ratio"] > 0
    assert rows[1]["ratio"] is None or not math.isfinite(rows[1]["ratio"])
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    got = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert float(got[0]["param"]) == 0.1
    assert float(got[0]["ratio"]) == rows[0]["ratio"]
