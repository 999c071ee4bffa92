import math

import numpy as np
import pytest

from app.config import GeometryError
from app.geometry import Ball, Box, clip_polygon, convex_intersection_area, polygon_area


def test_box_is_half_open():
    box = Box(0, 1, 0, 1)
    assert box.contains(0, 0)
    assert not box.contains(1, 0.5)
    assert not box.contains(0.5, 1)
    assert box.area == 1
    assert box.center == (0.5, 0.5)


def test_degenerate_box_is_closed_and_empty_box_raises():
    line = Box(0, 0, 0, 1)
    assert line.contains(0, 0.5)
    with pytest.raises(GeometryError):
        Box(1, 0, 0, 1)


def test_ball():
    ball = Ball((1.0, 1.0), 2.0)
    assert ball.contains(3.0, 1.0)
    assert not ball.contains(3.1, 1.0)
    assert ball.area == pytest.approx(4 * math.pi)
    assert ball.bounding_box() == Box(-1, 3, -1, 3)
    with pytest.raises(GeometryError):
        Ball((0, 0), 0)


def test_polygon_area_square():
    assert polygon_area([(0, 0), (2, 0), (2, 2), (0, 2)]) == pytest.approx(4)
    assert polygon_area([(0, 0), (1, 1)]) == 0


def test_crossing_rectangles_overlap_in_a_square():
    horizontal = Box(-5, 5, -0.5, 0.5).corners()
    vertical = Box(-0.5, 0.5, -5, 5).corners()
    assert convex_intersection_area(horizontal, vertical) == pytest.approx(1.0, abs=1e-12)


def test_disjoint_rectangles():
    assert convex_intersection_area(Box(0, 1, 0, 1).corners(), Box(2, 3, 0, 1).corners()) == 0


def test_clip_is_orientation_independent():
    a = Box(0, 2, 0, 2).corners()
    b = Box(1, 3, 1, 3).corners()
    assert polygon_area(clip_polygon(a, b)) == pytest.approx(1.0)
    assert polygon_area(clip_polygon(a, b[::-1])) == pytest.approx(1.0)


def test_rotated_square_inside_box():
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    diamond = [(c * x - s * y, s * x + c * y) for x, y in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]]
    assert convex_intersection_area(diamond, Box(-2, 2, -2, 2).corners()) == pytest.approx(1.0)
