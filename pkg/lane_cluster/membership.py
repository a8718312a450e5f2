"""
Object-to-centerline membership.

A membership matrix has one row per object and one column per centerline,
plus a final column for the outlier set. True memberships are one-hot:

    M_j = argmin_i D(X_i, C_j)
    Z*_j = e_{M_j}        if D(X_{M_j}, C_j) < W_j
         = e_outlier      otherwise

where C_j is the BEV center of object j and W_j its short footprint side.
Target memberships move Z* onto the estimated centerlines via a GraphMatch.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import LaneGraph, distance_matrix
from .log import get_logger
from .matching import GraphMatch
from .objects import DetectionBox, bev_centers, short_sides

logger = get_logger(__name__)

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MembershipMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] < 1:
            raise ValidationError(f"membership must be 2-D with an outlier column, got shape {values.shape}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValidationError("membership values must lie in [0, 1]")
        sums = values.sum(axis=1)
        if values.shape[0] and np.max(np.abs(sums - 1.0)) > _ROW_SUM_TOL:
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValidationError(f"membership row {bad} sums to {sums[bad]!r}, expected 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MembershipMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_objects(self) -> int:
        return self.values.shape[0]

    @property
    def n_curves(self) -> int:
        return self.values.shape[1] - 1

    @property
    def outlier_column(self) -> int:
        return self.n_curves

    def labels(self) -> np.ndarray:
        """Row argmax; ties resolve to the lowest column."""
        return np.argmax(self.values, axis=1) if self.n_objects else np.zeros(0, dtype=int)

    def is_one_hot(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    @classmethod
    def one_hot(cls, labels: Sequence[int] | np.ndarray, n_curves: int) -> MembershipMatrix:
        labels = np.asarray(labels, dtype=int).reshape(-1)
        if labels.size and (labels.min() < 0 or labels.max() > n_curves):
            raise ValidationError(f"labels must lie in [0, {n_curves}]")
        values = np.zeros((len(labels), n_curves + 1))
        values[np.arange(len(labels)), labels] = 1.0
        return cls(values)


def harden(matrix: MembershipMatrix) -> MembershipMatrix:
    return MembershipMatrix.one_hot(matrix.labels(), matrix.n_curves)


def true_membership(gt: LaneGraph, objects: Sequence[DetectionBox]) -> MembershipMatrix:
    n_curves = len(gt)
    outlier = n_curves
    if not objects:
        return MembershipMatrix(np.zeros((0, n_curves + 1)))

    widths = short_sides(objects)
    if n_curves == 0:
        return MembershipMatrix.one_hot(np.full(len(objects), outlier), n_curves)

    dist = distance_matrix(gt, bev_centers(objects))
    closest = np.argmin(dist, axis=0)
    closest_dist = dist[closest, np.arange(len(objects))]
    labels = np.where(closest_dist < widths, closest, outlier)
    return MembershipMatrix.one_hot(labels, n_curves)


def target_membership(z_star: MembershipMatrix, match: GraphMatch, n_est: int) -> MembershipMatrix:
    """
    Object j goes to the estimated curve matched to its true curve. Objects
    of unmatched true curves, like true outliers, go to the estimated outlier
    column.
    """
    if z_star.n_curves != match.n_gt:
        raise ValidationError(
            f"membership has {z_star.n_curves} true curves, match covers {match.n_gt}"
        )
    if n_est != match.n_est:
        raise ValidationError(f"n_est={n_est} but match covers {match.n_est} estimated curves")
    if not z_star.is_one_hot():
        raise ValidationError("true membership must be one-hot")

    lookup = np.array([n_est if i is None else i for i in match.h_prime] + [n_est], dtype=int)
    gt_labels = z_star.labels()
    labels = lookup[gt_labels]

    orphaned = int(np.sum((gt_labels != z_star.outlier_column) & (labels == n_est)))
    if orphaned:
        logger.warning("%d object(s) on unmatched true centerlines sent to the outlier set", orphaned)
    return MembershipMatrix.one_hot(labels, n_est)


def membership_accuracy(pred: MembershipMatrix, target: MembershipMatrix) -> float:
    """Fraction of rows whose argmax agrees; an empty matrix scores 1.0."""
    if pred.shape != target.shape:
        raise ValidationError(f"membership shape {pred.shape} != {target.shape}")
    if pred.n_objects == 0:
        return 1.0
    return float(np.mean(pred.labels() == target.labels()))
