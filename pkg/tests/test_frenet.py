import math

import numpy as np
import pytest

from riskplan.frenet import PathProjectionError, ReferencePath


@pytest.fixture
def straight():
    return ReferencePath([(0.0, 0.0), (100.0, 0.0)])


def test_pose_on_straight_path(straight):
    x, y, heading = straight.pose_at(10.0, 0.0)
    assert (x, y) == (10.0, 0.0)
    assert heading == 0.0


def test_left_offset_is_positive_y(straight):
    x, y, _ = straight.pose_at(10.0, 2.0)
    assert (x, y) == (10.0, 2.0)


def test_projection_round_trip(straight):
    s, d = straight.project(25.0, -1.5)
    assert s == pytest.approx(25.0)
    assert d == pytest.approx(-1.5)


def test_projection_beyond_ends_raises(straight):
    with pytest.raises(PathProjectionError):
        straight.project(-5.0, 0.0)
    with pytest.raises(PathProjectionError):
        straight.project(105.0, 0.0)


def test_polyline_corner():
    path = ReferencePath([(0, 0), (10, 0), (10, 10)])
    assert path.length == pytest.approx(20.0)
    x, y, heading = path.pose_at(15.0, 0.0)
    assert (x, y) == (10.0, 5.0)
    assert heading == pytest.approx(math.pi / 2)
    s, d = path.project(9.0, 1.0)
    assert s == pytest.approx(9.0)
    assert d == pytest.approx(1.0)


def test_extrapolates_past_last_waypoint(straight):
    x, y, _ = straight.pose_at(104.0, 0.0)
    assert x == pytest.approx(104.0)


def test_zero_length_segment_rejected():
    with pytest.raises(ValueError):
        ReferencePath([(0, 0), (0, 0), (1, 0)])
