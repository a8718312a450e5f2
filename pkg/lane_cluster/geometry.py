"""
Lane-graph data model and quadratic Bezier geometry.

Coordinates are BEV meters: x is lateral, z is longitudinal. A centerline
is a quadratic Bezier curve

    B(t) = (1 - t)^2 p0 + 2 t (1 - t) p1 + t^2 p2,   t in [0, 1]

and a lane graph is an ordered list of centerlines plus a boolean incidence
matrix (A[i, j] is True when centerline j follows centerline i).

Normalization to the unit square of the region of interest only happens at
encoding/loss boundaries; every stored value is in meters.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .log import get_logger

logger = get_logger(__name__)

# Bisection steps per monotone interval before Newton polishing.
_BISECT_STEPS = 30
_NEWTON_STEPS = 2


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.z)):
            raise ValidationError(f"Vec2 components must be finite, got ({self.x}, {self.z})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.z)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.z], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float] | np.ndarray) -> Vec2:
        return cls(float(values[0]), float(values[1]))


def as_points(points: Iterable[Vec2] | np.ndarray) -> np.ndarray:
    """Stack points into an (n, 2) float array."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
    else:
        arr = np.array([p.as_tuple() for p in points], dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("points must be finite")
    return arr


@dataclass(frozen=True, slots=True)
class BezierCurve:
    p0: Vec2
    p1: Vec2
    p2: Vec2

    def __post_init__(self):
        if self.p0 == self.p1 == self.p2:
            raise ValidationError(
                f"degenerate curve: all control points collapse to {self.p0.as_tuple()}"
            )

    @property
    def control(self) -> np.ndarray:
        """Control points as a (3, 2) array."""
        return np.array([self.p0.as_tuple(), self.p1.as_tuple(), self.p2.as_tuple()], dtype=float)

    @classmethod
    def from_array(cls, control: Sequence[Sequence[float]] | np.ndarray) -> BezierCurve:
        arr = np.asarray(control, dtype=float)
        if arr.shape != (3, 2):
            raise ValidationError(f"curve control points must have shape (3, 2), got {arr.shape}")
        return cls(Vec2.from_array(arr[0]), Vec2.from_array(arr[1]), Vec2.from_array(arr[2]))

    def translated(self, dx: float, dz: float) -> BezierCurve:
        return BezierCurve.from_array(self.control + np.array([dx, dz]))


@dataclass(frozen=True, slots=True)
class RegionOfInterest:
    x_min: float = -25.0
    x_max: float = 25.0
    z_min: float = 1.0
    z_max: float = 50.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise ValidationError(
                f"invalid ROI: x [{self.x_min}, {self.x_max}], z [{self.z_min}, {self.z_max}]"
            )

    @property
    def origin(self) -> np.ndarray:
        return np.array([self.x_min, self.z_min], dtype=float)

    @property
    def span(self) -> np.ndarray:
        return np.array([self.x_max - self.x_min, self.z_max - self.z_min], dtype=float)


DEFAULT_ROI = RegionOfInterest()


class Projection(NamedTuple):
    t: float
    distance: float


class Normalized(NamedTuple):
    point: Vec2
    clamped: bool


# -- evaluation ---------------------------------------------------------------


def bernstein(t: np.ndarray) -> np.ndarray:
    """Quadratic Bernstein basis, shape t.shape + (3,)."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([s * s, 2.0 * t * s, t * t], axis=-1)


def evaluate(control: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate a curve given by (3, 2) control points at every t (any shape)."""
    return bernstein(t) @ control


def bezier_point(curve: BezierCurve, t: float) -> Vec2:
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t={t} outside [0, 1]")
    s = 1.0 - t
    w0, w1, w2 = s * s, 2.0 * t * s, t * t
    return Vec2(
        w0 * curve.p0.x + w1 * curve.p1.x + w2 * curve.p2.x,
        w0 * curve.p0.z + w1 * curve.p1.z + w2 * curve.p2.z,
    )


def sample_curve(curve: BezierCurve | np.ndarray, n: int) -> np.ndarray:
    """n points at uniformly spaced t, shape (n, 2)."""
    control = curve.control if isinstance(curve, BezierCurve) else np.asarray(curve, dtype=float)
    return evaluate(control, np.linspace(0.0, 1.0, n))


# -- closest point ------------------------------------------------------------


def _critical_points(c3: np.ndarray, c2: np.ndarray, c1: np.ndarray) -> np.ndarray:
    """Roots of g'(t) = 3 c3 t^2 + 2 c2 t + c1, NaN where absent. Shape c1.shape + (2,)."""
    c3, c2 = np.broadcast_to(c3, c1.shape), np.broadcast_to(c2, c1.shape)
    disc = c2 * c2 - 3.0 * c3 * c1
    real = (disc >= 0.0) & (c3 != 0.0)
    root = np.sqrt(np.where(real, disc, 0.0))
    q = -(c2 + np.where(c2 >= 0.0, root, -root))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = q / (3.0 * c3)
        r2 = np.where(q != 0.0, c1 / q, np.nan)
    return np.stack([np.where(real, r1, np.nan), np.where(real, r2, np.nan)], axis=-1)


def project_many(controls: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Closest curve parameter and distance for every (curve, point) pair.

    controls has shape (k, 3, 2); both results have shape (k, n).

    The squared distance |B(t) - q|^2 has derivative 4 g(t) with g the cubic

        g(t) = (b.b) t^3 + 3 (a.b) t^2 + (2 a.a + d.b) t + d.a

    where a = p1 - p0, b = p0 - 2 p1 + p2, d = p0 - q. The critical points of g
    split [0, 1] into at most three monotone intervals; each interval with a
    sign change holds exactly one root, isolated by bisection and polished
    with bracketed Newton steps. The minimum over the roots and both
    endpoints is returned; exact ties resolve to the smallest t.
    """
    controls = np.asarray(controls, dtype=float).reshape(-1, 3, 2)
    q = np.asarray(points, dtype=float).reshape(-1, 2)
    k, n = len(controls), len(q)
    if k == 0 or n == 0:
        return np.zeros((k, n)), np.zeros((k, n))

    p0, p1, p2 = controls[:, 0], controls[:, 1], controls[:, 2]
    a = p1 - p0
    b = p0 - 2.0 * p1 + p2
    d = p0[:, None, :] - q[None, :, :]
    c3 = np.einsum("kd,kd->k", b, b)[:, None, None]
    c2 = 3.0 * np.einsum("kd,kd->k", a, b)[:, None, None]
    c1 = (2.0 * np.einsum("kd,kd->k", a, a)[:, None] + np.einsum("knd,kd->kn", d, b))[:, :, None]
    c0 = np.einsum("knd,kd->kn", d, a)[:, :, None]

    def g(t):
        return ((c3 * t + c2) * t + c1) * t + c0

    def dg(t):
        return (3.0 * c3 * t + 2.0 * c2) * t + c1

    breaks = np.empty((k, n, 4))
    breaks[..., 0] = 0.0
    breaks[..., 3] = 1.0
    crit = _critical_points(c3[..., 0], c2[..., 0], c1[..., 0])
    breaks[..., 1:3] = np.clip(np.nan_to_num(crit, nan=0.0), 0.0, 1.0)
    breaks.sort(axis=-1)

    lo = breaks[..., :3].copy()
    hi = breaks[..., 1:].copy()
    g_lo = g(lo)
    bracketed = g_lo * g(hi) <= 0.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        left = g_lo * g_mid <= 0.0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        g_lo = np.where(left, g_lo, g_mid)
    roots = 0.5 * (lo + hi)
    for _ in range(_NEWTON_STEPS):
        slope = dg(roots)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope != 0.0, g(roots) / slope, 0.0)
        roots = np.clip(roots - step, lo, hi)
    roots = np.where(bracketed, roots, breaks[..., :3])

    candidates = np.concatenate([breaks, roots], axis=-1)
    candidates.sort(axis=-1)
    on_curve = np.einsum("knmc,kcd->knmd", bernstein(candidates), controls)
    dist = np.linalg.norm(on_curve - q[None, :, None, :], axis=-1)
    best = np.argmin(dist, axis=-1)[..., None]
    return np.take_along_axis(candidates, best, axis=-1)[..., 0], np.take_along_axis(dist, best, axis=-1)[..., 0]


def project_points(curve: BezierCurve | np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest curve parameter and distance for every point; see project_many."""
    control = curve.control if isinstance(curve, BezierCurve) else np.asarray(curve, dtype=float)
    t, dist = project_many(control[None], points)
    return t[0], dist[0]


def closest_point(curve: BezierCurve, q: Vec2) -> Projection:
    t, dist = project_points(curve, np.array([q.as_tuple()]))
    return Projection(float(t[0]), float(dist[0]))


# -- lane graph ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LaneGraph:
    curves: tuple[BezierCurve, ...]
    incidence: np.ndarray
    existence: np.ndarray | None = None

    def __post_init__(self):
        curves = tuple(self.curves)
        n = len(curves)
        raw = np.array(self.incidence, dtype=bool)
        if raw.size != n * n:
            raise ValidationError(f"incidence has {raw.size} entries, expected {n}x{n}")
        incidence = raw.reshape(n, n)
        if np.any(np.diag(incidence)):
            logger.debug("clearing self-connections on the incidence diagonal")
            np.fill_diagonal(incidence, False)
        incidence.setflags(write=False)

        existence = self.existence
        if existence is not None:
            existence = np.array(existence, dtype=float).reshape(-1)
            if existence.shape != (n,):
                raise ValidationError(f"existence has {existence.size} entries, expected {n}")
            if not np.all((existence >= 0.0) & (existence <= 1.0)):
                raise ValidationError(f"existence probabilities must lie in [0, 1], got {existence}")
            existence.setflags(write=False)

        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "incidence", incidence)
        object.__setattr__(self, "existence", existence)

    def __len__(self) -> int:
        return len(self.curves)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LaneGraph):
            return NotImplemented
        return (
            self.curves == other.curves
            and np.array_equal(self.incidence, other.incidence)
            and np.array_equal(self.existence_or_ones(), other.existence_or_ones())
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def empty(cls) -> LaneGraph:
        return cls((), np.zeros((0, 0), dtype=bool))

    @classmethod
    def from_control_points(
        cls,
        control: np.ndarray | Sequence,
        edges: Iterable[tuple[int, int]] = (),
        existence: Sequence[float] | np.ndarray | None = None,
    ) -> LaneGraph:
        arr = np.asarray(control, dtype=float).reshape(-1, 3, 2)
        n = len(arr)
        incidence = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i}, {j}) out of range for {n} curves")
            incidence[i, j] = True
        return cls(tuple(BezierCurve.from_array(c) for c in arr), incidence, existence)

    def control_points(self) -> np.ndarray:
        """All control points, shape (N, 3, 2)."""
        if not self.curves:
            return np.zeros((0, 3, 2))
        return np.stack([c.control for c in self.curves])

    def existence_or_ones(self) -> np.ndarray:
        if self.existence is None:
            return np.ones(len(self.curves))
        return np.array(self.existence)

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.incidence)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def subgraph(self, indices: Sequence[int]) -> LaneGraph:
        idx = [int(i) for i in indices]
        incidence = self.incidence[np.ix_(idx, idx)] if idx else np.zeros((0, 0), bool)
        existence = None if self.existence is None else self.existence[idx]
        return LaneGraph(tuple(self.curves[i] for i in idx), incidence, existence)

    def with_existence(self, existence: Sequence[float] | np.ndarray | None) -> LaneGraph:
        return LaneGraph(self.curves, self.incidence, existence)

    def with_control_points(self, control: np.ndarray) -> LaneGraph:
        arr = np.asarray(control, dtype=float).reshape(-1, 3, 2)
        if len(arr) != len(self.curves):
            raise ValidationError(f"got {len(arr)} curves, graph has {len(self.curves)}")
        return LaneGraph(tuple(BezierCurve.from_array(c) for c in arr), self.incidence, self.existence)


def distance_matrix(graph: LaneGraph, centers: Sequence[Vec2] | np.ndarray) -> np.ndarray:
    """Entry (i, j) is the distance from center j to curve i, in meters."""
    _, dist = project_many(graph.control_points(), as_points(centers))
    return dist


# -- region of interest -------------------------------------------------------


def normalize(roi: RegionOfInterest, p: Vec2) -> Normalized:
    """Map p into [0, 1]^2; points outside the ROI are clamped and flagged."""
    u = (p.x - roi.x_min) / (roi.x_max - roi.x_min)
    v = (p.z - roi.z_min) / (roi.z_max - roi.z_min)
    cu = min(max(u, 0.0), 1.0)
    cv = min(max(v, 0.0), 1.0)
    clamped = cu != u or cv != v
    if clamped:
        logger.warning("point (%r, %r) outside ROI clamped", p.x, p.z)
    return Normalized(Vec2(cu, cv), clamped)


def denormalize(roi: RegionOfInterest, p: Vec2) -> Vec2:
    return Vec2(
        roi.x_min + p.x * (roi.x_max - roi.x_min),
        roi.z_min + p.z * (roi.z_max - roi.z_min),
    )


def normalize_array(roi: RegionOfInterest, points: np.ndarray) -> np.ndarray:
    """Affine (unclamped) normalization of any (..., 2) array."""
    return (np.asarray(points, dtype=float) - roi.origin) / roi.span
