"""
3D detection boxes and their BEV views.

A box is stored as its center (x, y, z) and eight corners, all in meters,
with y the height axis. Corner order is fixed: the bottom face counter-
clockwise, then the top face counter-clockwise, corner k + 4 directly above
corner k. The feature encoding relies on that order being stable.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import RegionOfInterest, Vec2, normalize_array

FEATURE_SIZE = 28

# Local footprint offsets in (along, across) units of (length / 2, width / 2).
_FOOTPRINT = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])

# Pairs of opposite faces, as corner index lists.
_OPPOSITE_FACES = (
    ((0, 1, 2, 3), (4, 5, 6, 7)),
    ((0, 1, 5, 4), (3, 2, 6, 7)),
    ((1, 2, 6, 5), (0, 3, 7, 4)),
)

_CUBOID_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DetectionBox:
    center: np.ndarray
    corners: np.ndarray
    class_id: int = 0
    confidence: float = 1.0

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        corners = np.array(self.corners, dtype=float)
        if center.shape != (3,):
            raise ValidationError(f"box center must have 3 components, got {center.shape}")
        if corners.shape != (8, 3):
            raise ValidationError(f"box corners must have shape (8, 3), got {corners.shape}")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(corners))):
            raise ValidationError("box coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence={self.confidence} outside [0, 1]")
        for face_a, face_b in _OPPOSITE_FACES:
            mid = 0.5 * (corners[list(face_a)].mean(axis=0) + corners[list(face_b)].mean(axis=0))
            if not np.allclose(mid, center, rtol=0.0, atol=_CUBOID_TOL):
                raise ValidationError(
                    f"corners do not form a cuboid around center {center.tolist()}"
                )
        center.setflags(write=False)
        corners.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "confidence", float(self.confidence))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DetectionBox):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.corners, other.corners)
            and self.class_id == other.class_id
            and self.confidence == other.confidence
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_footprint(
        cls,
        center: Sequence[float],
        length: float,
        width: float,
        height: float,
        yaw: float = 0.0,
        class_id: int = 0,
        confidence: float = 1.0,
    ) -> DetectionBox:
        """
        Build a box from its extents. yaw is the heading angle in the BEV
        plane, measured from +x towards +z; length runs along the heading.
        """
        cx, cy, cz = (float(v) for v in center)
        cos, sin = math.cos(yaw), math.sin(yaw)
        local = _FOOTPRINT * np.array([0.5 * length, 0.5 * width])
        xs = cx + local[:, 0] * cos - local[:, 1] * sin
        zs = cz + local[:, 0] * sin + local[:, 1] * cos
        corners = np.empty((8, 3))
        for k, y in enumerate((cy - 0.5 * height, cy + 0.5 * height)):
            corners[4 * k : 4 * k + 4, 0] = xs
            corners[4 * k : 4 * k + 4, 1] = y
            corners[4 * k : 4 * k + 4, 2] = zs
        return cls(np.array([cx, cy, cz]), corners, class_id, confidence)

    def translated(self, delta: Sequence[float] | np.ndarray) -> DetectionBox:
        """Rigid shift of center and corners; everything else is kept."""
        shift = np.asarray(delta, dtype=float).reshape(3)
        return DetectionBox(self.center + shift, self.corners + shift, self.class_id, self.confidence)


def bev_center(box: DetectionBox) -> Vec2:
    return Vec2(float(box.center[0]), float(box.center[2]))


def bev_centers(boxes: Sequence[DetectionBox]) -> np.ndarray:
    """(n, 2) array of BEV centers."""
    if not boxes:
        return np.zeros((0, 2))
    return np.array([[b.center[0], b.center[2]] for b in boxes], dtype=float)


def short_side(box: DetectionBox) -> float:
    """Shorter horizontal edge of the footprint (the height is ignored)."""
    footprint = box.corners[:4][:, [0, 2]]
    first = float(np.linalg.norm(footprint[1] - footprint[0]))
    second = float(np.linalg.norm(footprint[2] - footprint[1]))
    side = min(first, second)
    if side <= 0.0:
        raise ValidationError(f"zero-area footprint (edges {first}, {second})")
    return side


def short_sides(boxes: Sequence[DetectionBox]) -> np.ndarray:
    return np.array([short_side(b) for b in boxes], dtype=float)


def encode_feature(box: DetectionBox, roi: RegionOfInterest) -> np.ndarray:
    """
    28-vector [center, corner1..corner8, confidence]; each point contributes
    (x normalized, height in meters, z normalized).
    """
    points = np.vstack([box.center, box.corners])
    planar = normalize_array(roi, points[:, [0, 2]])
    encoded = np.column_stack([planar[:, 0], points[:, 1], planar[:, 1]])
    return np.append(encoded.reshape(-1), box.confidence)
