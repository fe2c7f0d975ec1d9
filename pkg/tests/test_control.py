import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ifecontrol.control import (
    ControlField, l2_project_segments, midpoint_interpolate, nearest_segment, postprocess_control,
    project_box, write_control_csv,
)
from ifecontrol.geometry import WaterdropLevelSet
from ifecontrol.ifem import build_ife_space
from ifecontrol.mesh import InterfacePolyline, build_mesh, classify_elements, extract_interface_polyline

WD = WaterdropLevelSet()
val = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("v, out", [(-0.5, 0.0), (0.3, 0.3), (2.0, 1.0)])
def test_project_box_examples(v, out):
    assert project_box(v, 0.0, 1.0) == out


def test_project_box_empty():
    with pytest.raises(ValueError):
        project_box(0.5, 1.0, 0.0)


def test_project_box_one_sided():
    np.testing.assert_array_equal(project_box(np.array([-3.0, 4.0]), None, 1.0), [-3.0, 1.0])
    np.testing.assert_array_equal(project_box(np.array([-3.0, 4.0]), None, None), [-3.0, 4.0])


def test_project_box_random_pairs(rng):
    a, b = rng.uniform(-3, 3, 10000), rng.uniform(-3, 3, 10000)
    pa, pb = project_box(a, -1.0, 1.5), project_box(b, -1.0, 1.5)
    assert np.all(np.abs(pa - pb) <= np.abs(a - b))
    np.testing.assert_array_equal(project_box(pa, -1.0, 1.5), pa)


@given(val, val, val, val)
def test_project_box_properties(a, b, lo, width):
    lo, hi = min(lo, lo + abs(width)), max(lo, lo + abs(width))
    pa, pb = project_box(a, lo, hi), project_box(b, lo, hi)
    assert lo <= pa <= hi
    assert project_box(pa, lo, hi) == pa
    assert abs(pa - pb) <= abs(a - b)


def test_control_field_bounds():
    c = ControlField(np.array([-1.0, 0.5, 3.0]), (0.0, 1.0))
    np.testing.assert_array_equal(c.values, [0.0, 0.5, 1.0])
    assert len(c) == 3
    with pytest.raises(ValueError):
        ControlField(np.zeros(2), (1.0, 1.0))


@pytest.fixture(scope="module")
def geom64():
    m = build_mesh(n=64)
    cls = classify_elements(m, WD)
    return m, cls, extract_interface_polyline(cls)


def _single_segment():
    return InterfacePolyline(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), np.array([0]),
                             np.array([0]), np.array([[0.0, 1.0]]), [np.array([0])])


def test_midpoint_interpolate_constant(geom64):
    _, _, poly = geom64
    c = midpoint_interpolate(lambda P: np.full(len(P), 2.5), poly)
    np.testing.assert_array_equal(c.values, 2.5)


def test_midpoint_equals_average_for_linears(geom64):
    _, _, poly = geom64
    lin = lambda P: 1.0 - 2.0 * P[..., 0] + 0.5 * P[..., 1]  # noqa: E731
    np.testing.assert_allclose(midpoint_interpolate(lin, poly).values,
                               l2_project_segments(lin, poly).values, atol=1e-14)


def test_segment_average_of_square():
    poly = _single_segment()
    assert l2_project_segments(lambda P: P[..., 0] ** 2, poly).values[0] == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert l2_project_segments(lambda P: np.full(P.shape[:-1], 7.0), poly).values[0] == pytest.approx(7.0)


def test_midpoint_and_average_agree_to_second_order():
    f = lambda P: np.sin(3 * P[..., 0]) * np.cos(2 * P[..., 1])  # noqa: E731
    diffs = []
    for n in (32, 64, 128):
        poly = extract_interface_polyline(classify_elements(build_mesh(n=n), WD))
        d = midpoint_interpolate(f, poly).values - l2_project_segments(f, poly).values
        diffs.append(np.sqrt(np.sum(poly.lengths * d * d)))
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert orders.min() >= 1.8, orders


def test_nearest_segment_matches_brute_force(geom64, rng):
    _, _, poly = geom64
    P = rng.uniform(-0.2, 1.0, (400, 2)) * [1, 0.5]
    seg, foot = nearest_segment(poly, P)
    a, b = poly.p0, poly.p1
    for x, s, f in zip(P, seg, foot):
        t = np.clip(np.sum((x - a) * (b - a), axis=1) / np.sum((b - a) ** 2, axis=1), 0, 1)
        d = np.linalg.norm(a + t[:, None] * (b - a) - x, axis=1)
        assert np.linalg.norm(f - x) == pytest.approx(d.min(), abs=1e-14)


def test_postprocessed_control_zero_and_unbounded(geom64, rng):
    m, cls, poly = geom64
    space = build_ife_space(m, cls, 10.0, 1.0, "conforming")
    pts = poly.quadrature(3)[0]
    zero = postprocess_control(space, poly, np.zeros(m.num_nodes), 1.0, (0.0, 1.0))
    assert not np.any(zero.on_segment_points(pts))
    p = rng.standard_normal(m.num_nodes)
    ctrl = postprocess_control(space, poly, p, 2.0)
    ref = -space.evaluate_trace(p, np.repeat(poly.owner, 3), pts.reshape(-1, 2)) / 2.0
    np.testing.assert_allclose(ctrl.on_segment_points(pts).ravel(), ref, rtol=1e-14, atol=1e-15)
    # pointwise evaluation on segment midpoints agrees with the segment form
    np.testing.assert_allclose(ctrl(poly.midpoints), ctrl.on_segment_points(poly.midpoints[:, None])[:, 0],
                               atol=1e-13)
    with pytest.raises(ValueError):
        postprocess_control(space, poly, p, 0.0)


def test_write_control_csv(tmp_path, geom64):
    _, _, poly = geom64
    c = ControlField(np.linspace(0, 1, len(poly)))
    path = tmp_path / "u.csv"
    write_control_csv(path, c, poly)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["segment_index", "midpoint_x", "midpoint_y", "value"]
    assert len(rows) == len(poly) + 1
    assert float(rows[-1][3]) == c.values[-1]
