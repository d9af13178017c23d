import math

from hypothesis import given, strategies as st

from gsgq.geometry import (DOMAIN, Rect, bounding_rect, clamp_point, contains_point, d_in, dist,
                           intersects, min_dist_point_rect, rect_intersection, strictly_inside,
                           union_rect, within_interior)

unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def rects(draw):
    x0, x1 = sorted((draw(unit), draw(unit)))
    y0, y1 = sorted((draw(unit), draw(unit)))
    return Rect(x0, y0, x1, y1)


def test_boundary_point_is_contained_but_not_strictly_inside():
    r = Rect(0.0, 0.0, 1.0, 1.0)
    assert contains_point(r, (1.0, 0.5))
    assert not strictly_inside((1.0, 0.5), r)
    assert d_in((1.0, 0.5), r) == 0.0


def test_d_in_is_distance_to_nearest_edge():
    assert math.isclose(d_in((0.3, 0.6), Rect(0.0, 0.0, 1.0, 1.0)), 0.3)


def test_square_and_area():
    s = Rect.square((0.5, 0.5), 0.2)
    assert math.isclose(s.area, 0.04)
    assert s.center == (0.5, 0.5)


def test_within_interior_rejects_shared_edges():
    outer = Rect(0.0, 0.0, 1.0, 1.0)
    assert within_interior(Rect(0.1, 0.1, 0.9, 0.9), outer)
    assert not within_interior(Rect(0.0, 0.1, 0.9, 0.9), outer)


@given(rects(), unit, unit)
def test_min_dist_zero_iff_contained(r, x, y):
    assert (min_dist_point_rect((x, y), r) == 0.0) == contains_point(r, (x, y))


@given(rects(), rects())
def test_intersection_agrees_with_intersects(a, b):
    i = rect_intersection(a, b)
    assert (i is not None) == intersects(a, b)
    if i is not None:
        u = union_rect(a, b)
        assert u.x0 <= i.x0 <= i.x1 <= u.x1


@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=20))
def test_bounding_rect_contains_points(pts):
    r = bounding_rect(pts)
    assert all(contains_point(r, p) for p in pts)


@given(unit, unit, unit, unit)
def test_mindist_bounded_by_point_distance(x, y, a, b):
    r = Rect(min(a, x), min(b, y), max(a, x), max(b, y))
    assert min_dist_point_rect((2.0, 2.0), r) <= dist((2.0, 2.0), (x, y)) + 1e-12


def test_clamp_point_into_domain():
    assert clamp_point((1.5, -0.2), DOMAIN) == (1.0, 0.0)
