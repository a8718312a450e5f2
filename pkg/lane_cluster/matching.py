"""
Minimum-cost bipartite assignment and centerline matching.

hungarian() solves the rectangular assignment problem by padding to a
square matrix and handing it to scipy's solver; padded pairs come back as
unmatched. Among several optimal assignments the canonical one is chosen:
rows in ascending order each take the lowest column that still admits an
optimal completion.

match_graphs() pairs estimated centerlines with true ones. The two outlier
sets are always paired with each other (estimated index n_est with true
index n_gt).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .geometry import DEFAULT_ROI, LaneGraph, RegionOfInterest, normalize_array
from .log import get_logger

logger = get_logger(__name__)

PAD_SENTINEL = 1e6


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    total: float
    shape: tuple[int, int]

    @property
    def unmatched_rows(self) -> list[int]:
        used = {r for r, _ in self.pairs}
        return [r for r in range(self.shape[0]) if r not in used]

    @property
    def unmatched_cols(self) -> list[int]:
        used = {c for _, c in self.pairs}
        return [c for c in range(self.shape[1]) if c not in used]


def _optimal_total(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def _lower_bound(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    if cost.shape[0] <= cost.shape[1]:
        return float(cost.min(axis=1).sum())
    return float(cost.min(axis=0).sum())


def _canonical_pairs(cost: np.ndarray, total: float) -> list[tuple[int, int]]:
    """Lexicographically smallest optimal assignment (row order, then column)."""
    n_rows, n_cols = cost.shape
    k = min(n_rows, n_cols)
    tol = 1e-9 * max(1.0, abs(total))
    pairs: list[tuple[int, int]] = []
    free = list(range(n_cols))
    acc = 0.0
    for r in range(n_rows):
        need = k - len(pairs)
        if need == 0:
            break
        rest = np.arange(r + 1, n_rows)
        for c in free:
            cols = [x for x in free if x != c]
            if min(len(rest), len(cols)) < need - 1:
                continue
            sub = cost[np.ix_(rest, cols)]
            if acc + cost[r, c] + _lower_bound(sub) > total + tol:
                continue
            if acc + cost[r, c] + _optimal_total(sub) <= total + tol:
                pairs.append((r, c))
                acc += float(cost[r, c])
                free.remove(c)
                break
    return pairs


def hungarian(cost: np.ndarray, sentinel: float = PAD_SENTINEL) -> Assignment:
    """Maximum-cardinality, minimum-cost assignment of an R x C cost matrix."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValidationError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise ValidationError("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise ValidationError("cost matrix contains infinite entries")

    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment((), 0.0, (n_rows, n_cols))

    size = max(n_rows, n_cols)
    padded = np.full((size, size), sentinel)
    padded[:n_rows, :n_cols] = cost
    rows, cols = linear_sum_assignment(padded)
    real = (rows < n_rows) & (cols < n_cols)
    total = float(cost[rows[real], cols[real]].sum())

    pairs = _canonical_pairs(cost, total)
    return Assignment(tuple(pairs), float(sum(cost[r, c] for r, c in pairs)), (n_rows, n_cols))


def curve_match_cost(
    est: LaneGraph,
    gt: LaneGraph,
    roi: RegionOfInterest = DEFAULT_ROI,
    existence_weight: float = 1.0,
) -> np.ndarray:
    """
    cost[i, j] = mean over the three control points of the L1 distance in
    normalized coordinates, plus existence_weight * (1 - existence_i).
    """
    e = normalize_array(roi, est.control_points())
    g = normalize_array(roi, gt.control_points())
    l1 = np.abs(e[:, None, :, :] - g[None, :, :, :]).sum(axis=-1).mean(axis=-1)
    penalty = existence_weight * (1.0 - est.existence_or_ones())
    return l1 + penalty[:, None]


@dataclass(frozen=True)
class GraphMatch:
    """
    h maps estimated index -> true index (None when unmatched); h_prime is
    its inverse over true indices. The outlier sets (n_est, n_gt) are always
    matched.
    """

    h: tuple[int | None, ...]
    h_prime: tuple[int | None, ...]
    total_cost: float = 0.0

    def __post_init__(self):
        for i, j in enumerate(self.h):
            if j is not None and self.h_prime[j] != i:
                raise ValidationError(f"inconsistent match: h[{i}]={j}, h_prime[{j}]={self.h_prime[j]}")
        for j, i in enumerate(self.h_prime):
            if i is not None and self.h[i] != j:
                raise ValidationError(f"inconsistent match: h_prime[{j}]={i}, h[{i}]={self.h[i]}")

    @property
    def n_est(self) -> int:
        return len(self.h)

    @property
    def n_gt(self) -> int:
        return len(self.h_prime)

    @property
    def outlier(self) -> tuple[int, int]:
        return (self.n_est, self.n_gt)

    def pairs(self) -> list[tuple[int, int]]:
        """Matched (estimated, true) pairs in estimated order, outliers excluded."""
        return [(i, j) for i, j in enumerate(self.h) if j is not None]

    @classmethod
    def identity(cls, n: int) -> GraphMatch:
        idx = tuple(range(n))
        return cls(idx, idx)

    @classmethod
    def from_pairs(cls, pairs, n_est: int, n_gt: int, total_cost: float = 0.0) -> GraphMatch:
        h: list[int | None] = [None] * n_est
        h_prime: list[int | None] = [None] * n_gt
        for i, j in pairs:
            h[i] = j
            h_prime[j] = i
        return cls(tuple(h), tuple(h_prime), total_cost)


def match_graphs(
    est: LaneGraph,
    gt: LaneGraph,
    roi: RegionOfInterest = DEFAULT_ROI,
    existence_weight: float = 1.0,
    sentinel: float = PAD_SENTINEL,
) -> GraphMatch:
    cost = curve_match_cost(est, gt, roi, existence_weight)
    assignment = hungarian(cost, sentinel)
    match = GraphMatch.from_pairs(assignment.pairs, len(est), len(gt), assignment.total)
    logger.debug(
        "matched %d of %d estimated / %d true centerlines (cost %.6g)",
        len(assignment.pairs),
        len(est),
        len(gt),
        assignment.total,
    )
    return match
