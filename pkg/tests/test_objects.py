"""
Tests for lane_cluster.objects: box construction, BEV views and the
28-value feature encoding.
"""

import math

import numpy as np
import pytest

from lane_cluster.errors import ValidationError
from lane_cluster.geometry import DEFAULT_ROI, Vec2
from lane_cluster.objects import (
    FEATURE_SIZE,
    DetectionBox,
    bev_center,
    bev_centers,
    encode_feature,
    short_side,
)


def test_from_footprint_axis_aligned():
    box = DetectionBox.from_footprint((2.0, 0.5, 10.0), length=4.0, width=2.0, height=1.0)
    xs = box.corners[:, 0]
    zs = box.corners[:, 2]
    assert sorted(set(xs.tolist())) == [0.0, 4.0]
    assert sorted(set(zs.tolist())) == [9.0, 11.0]
    assert short_side(box) == 2.0
    assert bev_center(box) == Vec2(2.0, 10.0)


def test_top_face_sits_above_bottom_face():
    box = DetectionBox.from_footprint((1.0, 0.8, 20.0), 4.5, 1.9, 1.6, yaw=0.3)
    np.testing.assert_array_equal(box.corners[4:, [0, 2]], box.corners[:4, [0, 2]])
    np.testing.assert_allclose(box.corners[:4, 1], 0.0)
    np.testing.assert_allclose(box.corners[4:, 1], 1.6)


@pytest.mark.parametrize("yaw", [0.0, 0.4, math.pi / 2, -2.0])
def test_short_side_is_rotation_invariant(yaw):
    box = DetectionBox.from_footprint((0.0, 0.8, 10.0), 4.5, 1.9, 1.6, yaw=yaw)
    assert short_side(box) == pytest.approx(1.9, abs=1e-12)


def test_short_side_of_wide_box_is_its_length():
    box = DetectionBox.from_footprint((0.0, 0.8, 10.0), 1.0, 3.0, 1.6)
    assert short_side(box) == pytest.approx(1.0)


def test_zero_area_footprint_rejected():
    box = DetectionBox.from_footprint((0.0, 0.8, 10.0), 4.0, 0.0, 1.6)
    with pytest.raises(ValidationError, match="zero-area"):
        short_side(box)


def test_confidence_and_shapes_validated():
    good = DetectionBox.from_footprint((0.0, 0.8, 10.0), 4.0, 2.0, 1.6)
    with pytest.raises(ValidationError, match="confidence"):
        DetectionBox(good.center, good.corners, confidence=1.5)
    with pytest.raises(ValidationError, match="corners"):
        DetectionBox(good.center, good.corners[:7])
    with pytest.raises(ValidationError, match="center"):
        DetectionBox([0.0, 10.0], good.corners)


def test_corners_must_surround_center():
    good = DetectionBox.from_footprint((0.0, 0.8, 10.0), 4.0, 2.0, 1.6)
    corners = np.array(good.corners)
    corners[0] += [0.5, 0.0, 0.0]
    with pytest.raises(ValidationError, match="cuboid"):
        DetectionBox(good.center, corners)


def test_translated_moves_everything_rigidly():
    box = DetectionBox.from_footprint((0.0, 0.8, 10.0), 4.5, 1.9, 1.6, yaw=0.7, class_id=3, confidence=0.6)
    moved = box.translated([1.0, 0.0, -2.0])
    assert bev_center(moved) == Vec2(1.0, 8.0)
    assert short_side(moved) == pytest.approx(short_side(box))
    assert moved.class_id == 3
    assert moved.confidence == 0.6
    assert moved != box
    np.testing.assert_allclose(moved.translated([-1.0, 0.0, 2.0]).corners, box.corners, atol=1e-12)


def test_bev_centers_empty_and_stacked():
    assert bev_centers([]).shape == (0, 2)
    boxes = [
        DetectionBox.from_footprint((x, 0.8, 5.0 + x), 4.0, 2.0, 1.6)
        for x in (0.0, 1.0, 2.0)
    ]
    np.testing.assert_array_equal(bev_centers(boxes), [[0.0, 5.0], [1.0, 6.0], [2.0, 7.0]])


def test_encode_feature_layout():
    box = DetectionBox.from_footprint((0.0, 0.8, 25.5), 4.0, 2.0, 1.6, confidence=0.75)
    feature = encode_feature(box, DEFAULT_ROI)
    assert feature.shape == (FEATURE_SIZE,)
    assert feature[-1] == 0.75
    # center: normalized x, raw height, normalized z
    np.testing.assert_allclose(feature[:3], [0.5, 0.8, 0.5])
    # first corner (+length/2, +width/2) at the bottom face
    np.testing.assert_allclose(feature[3:6], [(2.0 + 25.0) / 50.0, 0.0, (26.5 - 1.0) / 49.0])
