import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlroa import geometry

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_square_metrics():
    assert geometry.area(SQUARE) == 1.0
    assert geometry.signed_area(SQUARE) == 1.0
    assert geometry.signed_area(SQUARE[::-1]) == -1.0
    assert geometry.perimeter(SQUARE) == 4.0


def test_points_in_square():
    pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2], [0.999, 0.001]])
    np.testing.assert_array_equal(geometry.points_in_polygon(SQUARE, pts), [True, False, False, True])


def test_edge_tolerance():
    pts = np.array([[1.0 + 1e-12, 0.5], [1.0 + 1e-6, 0.5]])
    got = geometry.points_in_polygon(SQUARE, pts, edge_tol=1e-9)
    np.testing.assert_array_equal(got, [True, False])


def test_concave_polygon():
    # U shape: the notch is outside
    u = np.array([[0, 0], [3, 0], [3, 3], [2, 3], [2, 1], [1, 1], [1, 3], [0, 3]], dtype=float)
    got = geometry.points_in_polygon(u, np.array([[1.5, 2.0], [0.5, 2.0], [2.5, 2.5], [1.5, 0.5]]))
    np.testing.assert_array_equal(got, [False, True, True, True])
    assert geometry.area(u) == 7.0
    assert geometry.is_simple(u)


def test_self_intersection_detected():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    assert not geometry.is_simple(bowtie)


def test_edge_distance():
    d = geometry.edge_distance(SQUARE, np.array([[0.5, 0.5], [2.0, 0.5], [2.0, 2.0]]))
    np.testing.assert_allclose(d, [0.5, 1.0, np.sqrt(2.0)])


def test_outward_normals_independent_of_orientation():
    n1 = geometry.outward_normals(SQUARE)
    np.testing.assert_allclose(n1[0], [0.0, -1.0])
    n2 = geometry.outward_normals(SQUARE[::-1])
    np.testing.assert_allclose(n2[0], [0.0, 1.0])  # reversed: edge 0 is the top edge


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 5.0), b=st.floats(0.1, 5.0), n=st.integers(16, 300),
       px=st.floats(-6, 6), py=st.floats(-6, 6))
def test_ellipse_polygon_agrees_with_implicit_form(a, b, n, px, py):
    t = 2 * np.pi * np.arange(n) / n
    poly = np.column_stack([a * np.cos(t), b * np.sin(t)])
    r = (px / a) ** 2 + (py / b) ** 2
    inside = geometry.points_in_polygon(poly, np.array([[px, py]]))[0]
    # the inscribed polygon lies between the ellipse scaled by cos(pi/n) and the ellipse
    if r < np.cos(np.pi / n) ** 2 - 1e-9:
        assert inside
    elif r > 1.0 + 1e-9:
        assert not inside
    assert geometry.area(poly) == pytest.approx(0.5 * n * a * b * np.sin(2 * np.pi / n))
