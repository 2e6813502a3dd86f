import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wulfflab.anisotropy import (TensionSpec, box_shape, disc, equispaced_directions, mk_Mk,
                                 normalize_shape, polygon_shape, regular_polygon, support_value,
                                 wulff_from_tension)
from wulfflab.errors import EmptyShape, GaugeRatioExceeded, InvalidInput, UnboundedShape
from wulfflab.fixtures import square_shape
from wulfflab.oracles import halfplane_intersection, hausdorff


def test_support_values():
    assert support_value(disc(256), [0, 1]) == pytest.approx(1, abs=1e-4)
    sq = square_shape()
    assert support_value(sq, [1, 0]) == 1
    assert support_value(sq, [1, 1]) == 2


def test_support_stack_matches_loop():
    K = regular_polygon(7)
    Y = np.random.default_rng(1).normal(size=(50, 2))
    np.testing.assert_allclose(support_value(K, Y), [support_value(K, y) for y in Y])


def test_axis_tension_gives_square():
    d = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], float)
    K = wulff_from_tension(TensionSpec(d, np.ones(4), 2))
    assert K.volume == pytest.approx(4)
    assert hausdorff(K.vertices, square_shape().vertices) < 1e-12


def test_constant_tension_gives_ball():
    d = equispaced_directions(360)
    K = wulff_from_tension(TensionSpec(d, np.ones(360), 2))
    assert abs(K.volume - math.pi) <= 1e-3


def test_l1_tension_matches_halfplane_oracle():
    d = equispaced_directions(360)
    v = np.abs(d).sum(1)
    K = wulff_from_tension(TensionSpec(d, v, 2))
    assert hausdorff(K.vertices, square_shape().vertices) <= 1e-3
    ref = halfplane_intersection(d, v)
    assert hausdorff(K.vertices, ref) <= 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_random_tension_matches_halfplane_oracle(seed):
    rng = np.random.default_rng(seed)
    d = equispaced_directions(int(rng.integers(5, 60)), rng.uniform(0, 1))
    v = rng.uniform(0.5, 2.0, len(d))
    K = wulff_from_tension(TensionSpec(d, v, 2))
    assert hausdorff(K.vertices, halfplane_intersection(d, v)) <= 1e-9


def test_degenerate_tensions():
    d = np.array([[1, 0], [-1, 0]], float)
    with pytest.raises(UnboundedShape):
        wulff_from_tension(TensionSpec(d, np.ones(2), 2))
    with pytest.raises(InvalidInput):
        TensionSpec(np.array([[2.0, 0.0]]), np.ones(1), 2)
    with pytest.raises(InvalidInput):
        TensionSpec(d, np.array([1.0, -1.0]), 2)


def test_normalize_translates_and_scales():
    K = normalize_shape(polygon_shape(disc(512).vertices * 2 + [3, 0], allow_offset=True))
    assert K.volume == pytest.approx(math.pi, rel=1e-12)
    np.testing.assert_allclose(K.barycenter, 0, atol=1e-12)
    assert hausdorff(K.vertices, disc(512).vertices * math.sqrt(math.pi / disc(512).volume)) < 1e-9


def test_normalize_square_scale():
    K = normalize_shape(square_shape())
    s = math.sqrt(math.pi / 4)
    assert K.volume == pytest.approx(math.pi, rel=1e-12)
    assert hausdorff(K.vertices, square_shape().vertices * s) < 1e-12


def test_normalize_rejects_thin_rectangle():
    with pytest.raises(GaugeRatioExceeded):
        normalize_shape(box_shape([10, 0.1]))


@pytest.mark.parametrize("K, expected", [
    (disc(1024), (1.0, 1.0)),
    (square_shape(), (1.0, math.sqrt(2))),
    (regular_polygon(6), (math.sqrt(3) / 2, 1.0)),
])
def test_mk_Mk(K, expected):
    assert mk_Mk(K) == pytest.approx(expected, abs=1e-4)


@given(st.floats(0.1, 10), st.floats(-np.pi, np.pi))
def test_gauge_homogeneous_and_dual(t, ang):
    K = regular_polygon(5)
    x = np.array([math.cos(ang), math.sin(ang)])
    assert K.gauge(t * x) == pytest.approx(t * K.gauge(x), rel=1e-12)
    # x / gauge(x) lies on the boundary, so its support pairing is the gauge
    p = x / K.gauge(x)
    assert np.all(K.normals @ p <= K.offsets + 1e-12)
    assert K.gauge(p) == pytest.approx(1, rel=1e-12)


@given(st.lists(st.floats(0.3, 3.0), min_size=3, max_size=3), st.floats(0, 1))
def test_support_is_sublinear(vals, s):
    K = regular_polygon(9)
    rng = np.random.default_rng(int(s * 1000))
    y, z = rng.normal(size=(2, 2)) * np.array(vals[:2])[:, None]
    assert support_value(K, y + z) <= support_value(K, y) + support_value(K, z) + 1e-12
    assert support_value(K, vals[2] * y) == pytest.approx(vals[2] * support_value(K, y))


def test_empty_shape_error_exists():
    assert issubclass(EmptyShape, Exception)
