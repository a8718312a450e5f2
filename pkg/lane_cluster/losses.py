"""
Loss functions.

clustering_loss is the weighted cross-entropy between the row softmax of
per-object logits and a one-hot target membership. Rows whose target is the
outlier set are down-weighted (0.1 by default). lane_graph_loss is a compact
stand-in for the full lane graph loss stack: mean L1 over matched control
points in normalized coordinates plus the binary cross-entropy of the
existence probabilities.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ValidationError
from .geometry import DEFAULT_ROI, LaneGraph, RegionOfInterest, Vec2, as_points, normalize_array
from .matching import GraphMatch
from .membership import MembershipMatrix
from .objects import DetectionBox

OUTLIER_WEIGHT = 0.1
BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossReport:
    lane_graph_loss: float
    clustering_loss: float
    refine_loss: float
    alpha: float
    total: float

    @classmethod
    def combine(cls, lx: float, lc: float, alpha: float = 1.0, refine: float = 0.0) -> LossReport:
        return cls(lx, lc, refine, alpha, total_loss(lx, lc, alpha))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _check_logits(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 2:
        raise ValidationError(f"logits must be 2-D, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValidationError("logits must be finite")
    return logits


def softmax_rows(logits: np.ndarray) -> MembershipMatrix:
    logits = _check_logits(logits)
    if logits.shape[0] == 0:
        return MembershipMatrix(np.zeros(logits.shape))
    return MembershipMatrix(softmax(logits, axis=1))


def _row_weights(logits: np.ndarray, target: MembershipMatrix, outlier_weight: float) -> tuple[np.ndarray, np.ndarray]:
    if logits.shape != target.shape:
        raise ValidationError(f"logits shape {logits.shape} != target shape {target.shape}")
    if not target.is_one_hot():
        raise ValidationError("clustering target must be one-hot")
    labels = target.labels()
    weights = np.where(labels == target.outlier_column, outlier_weight, 1.0)
    return labels, weights


def clustering_loss(
    logits: np.ndarray,
    target: MembershipMatrix,
    outlier_weight: float = OUTLIER_WEIGHT,
) -> float:
    logits = _check_logits(logits)
    labels, weights = _row_weights(logits, target, outlier_weight)
    if len(labels) == 0:
        return 0.0
    log_p = log_softmax(logits, axis=1)
    ce = -log_p[np.arange(len(labels)), labels]
    return float(np.mean(weights * ce))


def clustering_loss_grad(
    logits: np.ndarray,
    target: MembershipMatrix,
    outlier_weight: float = OUTLIER_WEIGHT,
) -> np.ndarray:
    """d clustering_loss / d logits = w_j (softmax_j - target_j) / N."""
    logits = _check_logits(logits)
    labels, weights = _row_weights(logits, target, outlier_weight)
    if len(labels) == 0:
        return np.zeros(logits.shape)
    probs = softmax(logits, axis=1)
    return weights[:, None] * (probs - target.values) / len(labels)


def control_l1(est: LaneGraph, gt: LaneGraph, match: GraphMatch, roi: RegionOfInterest = DEFAULT_ROI) -> float:
    """Mean over matched pairs of the mean per-control-point |dx| + |dz| (normalized)."""
    pairs = match.pairs()
    if not pairs:
        return 0.0
    e = normalize_array(roi, est.control_points())
    g = normalize_array(roi, gt.control_points())
    est_idx = [i for i, _ in pairs]
    gt_idx = [j for _, j in pairs]
    return float(np.abs(e[est_idx] - g[gt_idx]).sum(axis=-1).mean())


def existence_bce(est: LaneGraph, match: GraphMatch, eps: float = BCE_EPS) -> float:
    if len(est) == 0:
        return 0.0
    target = np.array([j is not None for j in match.h], dtype=float)
    p = np.clip(est.existence_or_ones(), eps, 1.0 - eps)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))


def lane_graph_loss(
    est: LaneGraph,
    gt: LaneGraph,
    match: GraphMatch,
    roi: RegionOfInterest = DEFAULT_ROI,
    eps: float = BCE_EPS,
) -> float:
    if match.n_est != len(est) or match.n_gt != len(gt):
        raise ValidationError(
            f"match covers {match.n_est}x{match.n_gt} curves, graphs have {len(est)}x{len(gt)}"
        )
    return control_l1(est, gt, match, roi) + existence_bce(est, match, eps)


def refine_loss(pred_centers: Sequence[Vec2] | np.ndarray, gt_centers: Sequence[Vec2] | np.ndarray) -> float:
    pred = as_points(pred_centers)
    gt = as_points(gt_centers)
    if len(pred) != len(gt):
        raise ValidationError(f"{len(pred)} predicted centers for {len(gt)} true centers")
    if len(pred) == 0:
        return 0.0
    return float(np.abs(pred - gt).sum(axis=1).mean())


def replace_centers(
    boxes: Sequence[DetectionBox],
    centers: Sequence[Vec2 | Sequence[float]],
) -> list[DetectionBox]:
    """
    Move each box to a new center keeping orientation, extents, class and
    confidence. A Vec2 center keeps the box's height.
    """
    if len(boxes) != len(centers):
        raise ValidationError(f"{len(centers)} centers for {len(boxes)} boxes")
    moved = []
    for box, center in zip(boxes, centers):
        if isinstance(center, Vec2):
            target = np.array([center.x, box.center[1], center.z])
        else:
            target = np.asarray(center, dtype=float).reshape(3)
        moved.append(box.translated(target - box.center))
    return moved


def total_loss(lx: float, lc: float, alpha: float = 1.0) -> float:
    if lx < 0.0 or lc < 0.0:
        raise ValidationError(f"losses must be non-negative, got L_X={lx}, L_C={lc}")
    return lx + alpha * lc
