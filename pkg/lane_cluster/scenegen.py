"""
Deterministic synthetic BEV scenes.

A scene is a ground-truth lane graph, objects placed on its lanes with
lateral noise, and off-lane outlier objects, together with the labels the
objects were generated with. Every random draw comes from one
numpy Generator seeded by the spec, so a spec fully determines its scene.

Patterns (lanes run from z_min + 1 to z_max - 1 of the region of interest):

- parallel: straight lanes, lane_gap apart, centered on x = 0;
- mixed: the parallel layout bent into arcs sharing one random bend;
- fork: a trunk up to the middle of the range, then n_lanes - 1 branches
  starting at its end (edges trunk -> branch);
- merge: the fork mirrored along z (edges branch -> trunk, trunk last).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import DEFAULT_ROI, BezierCurve, LaneGraph, RegionOfInterest, evaluate, project_points
from .log import get_logger
from .membership import MembershipMatrix
from .objects import DetectionBox

logger = get_logger(__name__)

PATTERNS = ("parallel", "fork", "merge", "mixed")

OBJECT_HEIGHT = 1.6
# Lateral offsets are clipped to this fraction of the short side.
_CLIP_FRACTION = 0.49
# Outliers keep at least short side + margin from every curve.
_OUTLIER_MARGIN = 0.5
_OUTLIER_ATTEMPTS = 1000
_T_RANGE = (0.1, 0.9)


@dataclass(frozen=True)
class SceneSpec:
    n_lanes: int = 3
    pattern: str = "parallel"
    lane_gap: float = 3.5
    objects_per_lane: int = 5
    lateral_noise_sigma: float = 0.2
    n_outliers: int = 0
    footprint: tuple[float, float] = (4.5, 1.9)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "footprint", tuple(float(v) for v in self.footprint))
        if self.pattern not in PATTERNS:
            raise ValidationError(f"unknown pattern {self.pattern!r}, expected one of {PATTERNS}")
        if self.n_lanes < 0 or self.objects_per_lane < 0 or self.n_outliers < 0:
            raise ValidationError("lane and object counts must be non-negative")
        if self.pattern in ("fork", "merge") and self.n_lanes == 1:
            raise ValidationError(f"{self.pattern} pattern needs at least 2 lanes")
        if not self.lane_gap > 0.0:
            raise ValidationError(f"lane_gap={self.lane_gap} must be positive")
        if self.lateral_noise_sigma < 0.0:
            raise ValidationError(f"lateral_noise_sigma={self.lateral_noise_sigma} must be non-negative")
        if len(self.footprint) != 2:
            raise ValidationError(f"footprint must be (length, width), got {self.footprint}")
        length, width = self.footprint
        if not (length > 0.0 and width > 0.0):
            raise ValidationError(f"footprint {self.footprint} must have positive extents")

    @property
    def short_side(self) -> float:
        return min(self.footprint)


@dataclass(frozen=True)
class Scene:
    gt_graph: LaneGraph
    objects: tuple[DetectionBox, ...]
    gen_membership: MembershipMatrix
    roi: RegionOfInterest = DEFAULT_ROI

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.gen_membership.n_objects != len(self.objects):
            raise ValidationError(
                f"gen_membership has {self.gen_membership.n_objects} rows for {len(self.objects)} objects"
            )


# -- lane layouts -------------------------------------------------------------


def _offsets(n: int, gap: float) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2.0) * gap


def _parallel(spec: SceneSpec, roi: RegionOfInterest, bend: float = 0.0):
    z_lo, z_hi = roi.z_min + 1.0, roi.z_max - 1.0
    z_mid = 0.5 * (z_lo + z_hi)
    control = [[[x, z_lo], [x + bend, z_mid], [x, z_hi]] for x in _offsets(spec.n_lanes, spec.lane_gap)]
    return np.array(control, dtype=float).reshape(-1, 3, 2), []


def _fork(spec: SceneSpec, roi: RegionOfInterest):
    z_lo, z_hi = roi.z_min + 1.0, roi.z_max - 1.0
    z_mid = 0.5 * (z_lo + z_hi)
    z_bend = 0.5 * (z_mid + z_hi)
    control = [[[0.0, z_lo], [0.0, 0.5 * (z_lo + z_mid)], [0.0, z_mid]]]
    for x in _offsets(spec.n_lanes - 1, spec.lane_gap):
        control.append([[0.0, z_mid], [0.5 * x, z_bend], [x, z_hi]])
    edges = [(0, b) for b in range(1, spec.n_lanes)]
    return np.array(control, dtype=float), edges


def _merge(spec: SceneSpec, roi: RegionOfInterest):
    control, _ = _fork(spec, roi)
    # mirror along z and reverse each curve so lanes still run towards +z
    mirrored = control.copy()
    mirrored[:, :, 1] = roi.z_min + roi.z_max - mirrored[:, :, 1]
    mirrored = mirrored[:, ::-1, :]
    ordered = np.concatenate([mirrored[1:], mirrored[:1]])
    trunk = len(ordered) - 1
    return ordered, [(b, trunk) for b in range(trunk)]


def _layout(spec: SceneSpec, roi: RegionOfInterest, rng: np.random.Generator) -> LaneGraph:
    if spec.n_lanes == 0:
        return LaneGraph.empty()
    if spec.pattern == "parallel":
        control, edges = _parallel(spec, roi)
    elif spec.pattern == "mixed":
        bend = float(rng.uniform(-1.0, 1.0)) * 0.1 * (roi.z_max - roi.z_min)
        control, edges = _parallel(spec, roi, bend)
    elif spec.pattern == "fork":
        control, edges = _fork(spec, roi)
    else:
        control, edges = _merge(spec, roi)

    # a Bezier curve stays inside the hull of its control points
    xs, zs = control[..., 0], control[..., 1]
    if xs.min() < roi.x_min or xs.max() > roi.x_max or zs.min() < roi.z_min or zs.max() > roi.z_max:
        raise ValidationError(
            f"{spec.n_lanes} lanes {spec.lane_gap} m apart ({spec.pattern}) do not fit the region "
            f"x [{roi.x_min}, {roi.x_max}], z [{roi.z_min}, {roi.z_max}]"
        )
    return LaneGraph.from_control_points(control, edges)


# -- objects ------------------------------------------------------------------


def _tangent(control: np.ndarray, t: float) -> np.ndarray:
    p0, p1, p2 = control
    d = 2.0 * (1.0 - t) * (p1 - p0) + 2.0 * t * (p2 - p1)
    return d / np.linalg.norm(d)


def _box(spec: SceneSpec, x: float, z: float, yaw: float) -> DetectionBox:
    length, width = spec.footprint
    return DetectionBox.from_footprint(
        (x, 0.5 * OBJECT_HEIGHT, z), length, width, OBJECT_HEIGHT, yaw=yaw
    )


def _lane_objects(spec: SceneSpec, graph: LaneGraph, rng: np.random.Generator) -> tuple[list[DetectionBox], list[int]]:
    limit = _CLIP_FRACTION * spec.short_side
    boxes: list[DetectionBox] = []
    labels: list[int] = []
    for lane, curve in enumerate(graph.curves):
        control = curve.control
        for _ in range(spec.objects_per_lane):
            t = float(rng.uniform(*_T_RANGE))
            offset = float(np.clip(rng.normal(0.0, spec.lateral_noise_sigma), -limit, limit))
            tangent = _tangent(control, t)
            normal = np.array([-tangent[1], tangent[0]])
            x, z = evaluate(control, t) + offset * normal
            yaw = math.atan2(tangent[1], tangent[0])
            boxes.append(_box(spec, float(x), float(z), yaw))
            labels.append(lane)
    return boxes, labels


def _outlier_objects(
    spec: SceneSpec, graph: LaneGraph, roi: RegionOfInterest, rng: np.random.Generator
) -> list[DetectionBox]:
    clearance = spec.short_side + _OUTLIER_MARGIN
    boxes = []
    for k in range(spec.n_outliers):
        for _ in range(_OUTLIER_ATTEMPTS):
            point = np.array([rng.uniform(roi.x_min, roi.x_max), rng.uniform(roi.z_min, roi.z_max)])
            yaw = float(rng.uniform(-math.pi, math.pi))
            if all(project_points(c, point[None, :])[1][0] >= clearance for c in graph.curves):
                boxes.append(_box(spec, float(point[0]), float(point[1]), yaw))
                break
        else:
            raise ValidationError(
                f"no room for outlier {k}: nothing in the region is {clearance} m away from every lane"
            )
    return boxes


def generate_scene(spec: SceneSpec, roi: RegionOfInterest = DEFAULT_ROI) -> Scene:
    rng = np.random.default_rng(spec.seed)
    graph = _layout(spec, roi, rng)
    boxes, labels = _lane_objects(spec, graph, rng)
    outliers = _outlier_objects(spec, graph, roi, rng)
    labels += [len(graph)] * len(outliers)
    logger.debug(
        "generated %s scene: %d lanes, %d lane objects, %d outliers (seed %d)",
        spec.pattern,
        len(graph),
        len(boxes),
        len(outliers),
        spec.seed,
    )
    return Scene(graph, tuple(boxes + outliers), MembershipMatrix.one_hot(labels, len(graph)), roi)


def perturb_graph(
    graph: LaneGraph,
    noise_sigma: float,
    drop_prob: float,
    seed: int,
    roi: RegionOfInterest = DEFAULT_ROI,
) -> LaneGraph:
    """
    Imitate an imperfect estimate of `graph`. noise_sigma is in normalized
    units: control points get Gaussian jitter of noise_sigma * ROI span,
    existence becomes existence * (1 - noise_sigma |N(0, 1)|), and each curve
    is dropped independently with probability drop_prob.
    """
    if noise_sigma < 0.0:
        raise ValidationError(f"noise_sigma={noise_sigma} must be non-negative")
    if not 0.0 <= drop_prob <= 1.0:
        raise ValidationError(f"drop_prob={drop_prob} outside [0, 1]")

    rng = np.random.default_rng(seed)
    control = graph.control_points()
    existence = graph.existence_or_ones()
    keep = []
    for i in range(len(graph)):
        control[i] = control[i] + rng.normal(0.0, 1.0, size=(3, 2)) * noise_sigma * roi.span
        existence[i] = existence[i] * float(np.clip(1.0 - noise_sigma * abs(rng.normal()), 0.0, 1.0))
        if rng.random() >= drop_prob:
            keep.append(i)

    jittered = LaneGraph(
        tuple(BezierCurve.from_array(c) for c in control),
        graph.incidence,
        existence if (graph.existence is not None or noise_sigma > 0.0) else None,
    )
    return jittered.subgraph(keep)
