"""
Lane-graph evaluation.

The conventions are fixed here so scores are reproducible (STSU-style):

- curves are sampled at 100 uniform t values;
- precision is the fraction of estimated samples within a threshold of any
  true curve, recall the fraction of true samples within the threshold of
  any estimated curve;
- M-F is the mean F1 over thresholds 0.5, 1.0 and 1.5 m;
- Detect is the fraction of true curves whose matched estimate lies, on
  average, closer than 1.0 m;
- C-F is the F1 between the estimated edges transported through the
  matching and the true edges.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import DEFAULT_ROI, LaneGraph, RegionOfInterest, project_points, sample_curve
from .matching import GraphMatch, match_graphs
from .membership import true_membership
from .objects import DetectionBox

SAMPLES = 100
THRESHOLDS = (0.5, 1.0, 1.5)
DETECT_THRESHOLD = 1.0
CONVENTION = "STSU-style"


@dataclass(frozen=True)
class ThresholdScore:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class EvalReport:
    m_f: float
    detect: float
    c_f: float
    per_threshold: tuple[ThresholdScore, ...]
    split: dict[str, float | None] | None = None
    membership_accuracy: float | None = None
    convention: str = CONVENTION
    extra: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_threshold"] = [asdict(s) for s in self.per_threshold]
        if not self.extra:
            out.pop("extra")
        return out


def _samples(graph: LaneGraph, n: int) -> np.ndarray:
    if len(graph) == 0:
        return np.zeros((0, 2))
    return np.vstack([sample_curve(c, n) for c in graph.curves])


def _nearest_curve_distance(points: np.ndarray, graph: LaneGraph) -> np.ndarray:
    out = np.full(len(points), np.inf)
    for curve in graph.curves:
        _, dist = project_points(curve, points)
        out = np.minimum(out, dist)
    return out


def centerline_pr(
    est: LaneGraph,
    gt: LaneGraph,
    threshold: float,
    samples: int = SAMPLES,
) -> tuple[float, float]:
    """
    (precision, recall). An empty side contributes a perfect score to the
    side it cannot be wrong about: empty estimate -> precision 1, empty truth
    -> recall 1.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold={threshold} must be positive")
    est_pts = _samples(est, samples)
    gt_pts = _samples(gt, samples)
    precision = 1.0 if len(est_pts) == 0 else float(np.mean(_nearest_curve_distance(est_pts, gt) <= threshold))
    recall = 1.0 if len(gt_pts) == 0 else float(np.mean(_nearest_curve_distance(gt_pts, est) <= threshold))
    return precision, recall


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def per_threshold_scores(
    est: LaneGraph,
    gt: LaneGraph,
    thresholds: Sequence[float] = THRESHOLDS,
    samples: int = SAMPLES,
) -> tuple[ThresholdScore, ...]:
    return tuple(ThresholdScore(t, *centerline_pr(est, gt, t, samples)) for t in thresholds)


def m_f_score(
    est: LaneGraph,
    gt: LaneGraph,
    thresholds: Sequence[float] = THRESHOLDS,
    samples: int = SAMPLES,
) -> float:
    scores = per_threshold_scores(est, gt, thresholds, samples)
    return float(np.mean([_f1(s.precision, s.recall) for s in scores]))


def detect_score(
    est: LaneGraph,
    gt: LaneGraph,
    threshold: float = DETECT_THRESHOLD,
    match: GraphMatch | None = None,
    roi: RegionOfInterest = DEFAULT_ROI,
    samples: int = SAMPLES,
) -> float:
    """A graph without true curves has nothing to detect and scores 1.0."""
    if len(gt) == 0:
        return 1.0
    if match is None:
        match = match_graphs(est, gt, roi)
    detected = 0
    for j, i in enumerate(match.h_prime):
        if i is None:
            continue
        _, dist = project_points(est.curves[i], sample_curve(gt.curves[j], samples))
        if float(np.mean(dist)) < threshold:
            detected += 1
    return detected / len(gt)


def connectivity_f(est: LaneGraph, gt: LaneGraph, match: GraphMatch) -> float:
    est_edges = est.edges()
    gt_edges = set(gt.edges())
    if not est_edges and not gt_edges:
        return 1.0
    if not est_edges or not gt_edges:
        return 0.0
    transported = {
        (match.h[i], match.h[k])
        for i, k in est_edges
        if match.h[i] is not None and match.h[k] is not None
    }
    hits = len(transported & gt_edges)
    # edges touching unmatched estimates cannot be transported and count as misses
    precision = hits / len(est_edges)
    recall = hits / len(gt_edges)
    return _f1(precision, recall)


def split_m_f(
    est: LaneGraph,
    gt: LaneGraph,
    objects: Sequence[DetectionBox],
    match: GraphMatch,
    thresholds: Sequence[float] = THRESHOLDS,
    samples: int = SAMPLES,
) -> dict[str, float | None]:
    """M-F restricted to true curves with objects on them and to those without."""
    z_star = true_membership(gt, objects)
    occupied = set(int(c) for c in z_star.labels() if c != z_star.outlier_column)
    result: dict[str, float | None] = {}
    for name, members in (
        ("object_lanes", sorted(occupied)),
        ("empty_lanes", [j for j in range(len(gt)) if j not in occupied]),
    ):
        if not members:
            result[name] = None
            continue
        est_idx = sorted(i for j in members if (i := match.h_prime[j]) is not None)
        result[name] = m_f_score(est.subgraph(est_idx), gt.subgraph(members), thresholds, samples)
    return result


def evaluate(
    est: LaneGraph,
    gt: LaneGraph,
    objects: Sequence[DetectionBox] = (),
    roi: RegionOfInterest = DEFAULT_ROI,
    thresholds: Sequence[float] = THRESHOLDS,
    detect_threshold: float = DETECT_THRESHOLD,
    samples: int = SAMPLES,
    existence_weight: float = 1.0,
) -> EvalReport:
    match = match_graphs(est, gt, roi, existence_weight)
    scores = per_threshold_scores(est, gt, thresholds, samples)
    m_f = float(np.mean([_f1(s.precision, s.recall) for s in scores]))
    split = split_m_f(est, gt, objects, match, thresholds, samples) if objects else None
    return EvalReport(
        m_f=m_f,
        detect=detect_score(est, gt, detect_threshold, match, roi, samples),
        c_f=connectivity_f(est, gt, match),
        per_threshold=scores,
        split=split,
    )
