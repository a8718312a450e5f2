"""
Supervision labels and curve descent.

build_labels() runs one label-factory pass for a predicted graph:

    match_graphs -> true_membership -> target_membership
                 -> clustering_loss -> lane_graph_loss -> total

descend_curves() then updates the predicted control points by gradient
descent with the matching and the target memberships frozen at step 0.
The parameters are control points in normalized ROI coordinates. The
control-point L1 is smoothed with a Huber kink of width huber_delta; the
clustering term couples curves to objects through distance logits

    logit[j, i] = base[j, i] - D(X_i, C_j)^2 / (2 sigma^2)

whose gradient is taken at the closest-point parameter of every pair
(the parameter itself does not move the minimum to first order).
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import DEFAULT_SETTINGS, Settings
from .errors import NumericalError, ValidationError
from .geometry import (
    LaneGraph,
    Vec2,
    as_points,
    bernstein,
    evaluate,
    normalize_array,
    project_points,
)
from .log import get_logger
from .losses import (
    LossReport,
    clustering_loss,
    clustering_loss_grad,
    lane_graph_loss,
    refine_loss,
    replace_centers,
)
from .matching import GraphMatch, match_graphs
from .membership import MembershipMatrix, target_membership, true_membership
from .objects import DetectionBox, bev_centers

logger = get_logger(__name__)

DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class LabelBundle:
    z_star: MembershipMatrix
    z_bar: MembershipMatrix
    match: GraphMatch
    losses: LossReport
    uniform_logits: bool = False
    refined_objects: tuple[DetectionBox, ...] | None = None


def _logits_or_uniform(logits: np.ndarray | None, n_objects: int, n_pred: int) -> tuple[np.ndarray, bool]:
    expected = (n_objects, n_pred + 1)
    if logits is None:
        return np.zeros(expected), True
    logits = np.asarray(logits, dtype=float)
    if logits.shape != expected:
        raise ValidationError(f"logits shape {logits.shape} != {expected}")
    return logits, False


def build_labels(
    pred: LaneGraph,
    gt: LaneGraph,
    objects: Sequence[DetectionBox],
    logits: np.ndarray | None = None,
    alpha: float | None = None,
    *,
    refined_centers: Sequence[Vec2] | np.ndarray | None = None,
    settings: Settings = DEFAULT_SETTINGS,
) -> LabelBundle:
    """
    Without logits the clustering loss is taken against uniform logits, which
    makes it (n_on_lane + w n_outlier) / N_B * ln(N_pred + 1).
    """
    alpha = settings.loss.alpha if alpha is None else alpha
    objects = tuple(objects)
    logits, uniform = _logits_or_uniform(logits, len(objects), len(pred))

    match = match_graphs(
        pred, gt, settings.roi, settings.matching.existence_weight, settings.matching.pad_sentinel
    )
    z_star = true_membership(gt, objects)
    z_bar = target_membership(z_star, match, len(pred))
    lc = clustering_loss(logits, z_bar, settings.loss.outlier_weight)
    lx = lane_graph_loss(pred, gt, match, settings.roi, settings.loss.bce_eps)

    refined = None
    refine = 0.0
    if refined_centers is not None:
        if len(refined_centers) != len(objects):
            raise ValidationError(f"{len(refined_centers)} refined centers for {len(objects)} objects")
        refine = refine_loss(refined_centers, bev_centers(objects))
        refined = tuple(replace_centers(objects, [Vec2.from_array(p) for p in as_points(refined_centers)]))

    losses = LossReport.combine(lx, lc, alpha, refine)
    logger.debug("labels: L_X=%.6g L_C=%.6g total=%.6g", lx, lc, losses.total)
    return LabelBundle(z_star, z_bar, match, losses, uniform, refined)


# -- descent ------------------------------------------------------------------


class DescentResult(NamedTuple):
    graph: LaneGraph
    trace: tuple[float, ...]
    lane_graph_trace: tuple[float, ...]


def _huber(r: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r / delta, a - 0.5 * delta)


class DescentProblem:
    """
    Objective of one descent call with matching and targets frozen.

    All methods take control points of the predicted graph in normalized
    coordinates, shape (N_pred, 3, 2).
    """

    def __init__(
        self,
        pred: LaneGraph,
        gt: LaneGraph,
        objects: Sequence[DetectionBox],
        logits: np.ndarray | None = None,
        alpha: float | None = None,
        settings: Settings = DEFAULT_SETTINGS,
    ):
        self.pred = pred
        self.gt = gt
        self.settings = settings
        self.roi = settings.roi
        self.alpha = settings.loss.alpha if alpha is None else float(alpha)
        if self.alpha < 0.0:
            raise ValidationError(f"alpha={self.alpha} must be non-negative")
        self.sigma = settings.em.sigma
        self.delta = settings.loss.huber_delta

        objects = tuple(objects)
        self.base_logits, _ = _logits_or_uniform(logits, len(objects), len(pred))
        self.centers = bev_centers(objects)
        self.match = match_graphs(
            pred, gt, self.roi, settings.matching.existence_weight, settings.matching.pad_sentinel
        )
        self.z_bar = target_membership(true_membership(gt, objects), self.match, len(pred))

        pairs = self.match.pairs()
        self._est_idx = np.array([i for i, _ in pairs], dtype=int)
        gt_norm = normalize_array(self.roi, gt.control_points())
        self._gt_matched = gt_norm[[j for _, j in pairs]] if pairs else np.zeros((0, 3, 2))
        self._start_meters = pred.control_points()
        self._start = normalize_array(self.roi, self._start_meters)

    def initial(self) -> np.ndarray:
        return self._start.copy()

    def meters(self, control: np.ndarray) -> np.ndarray:
        # relative to the start so that an unmoved curve keeps its exact values
        return self._start_meters + (control - self._start) * self.roi.span

    def graph(self, control: np.ndarray) -> LaneGraph:
        return self.pred.with_control_points(self.meters(control))

    @property
    def _clustering_active(self) -> bool:
        return self.alpha > 0.0 and len(self.centers) > 0

    def _distance_logits(self, control: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Distance-coupled logits and the per-curve closest parameters."""
        meters = self.meters(control)
        logits = self.base_logits.copy()
        params = []
        for i, curve in enumerate(meters):
            t, dist = project_points(curve, self.centers)
            logits[:, i] -= dist**2 / (2.0 * self.sigma**2)
            params.append(t)
        return logits, params

    def _clustering_term(self, control: np.ndarray) -> float:
        if not self._clustering_active:
            return 0.0
        logits, _ = self._distance_logits(control)
        return clustering_loss(logits, self.z_bar, self.settings.loss.outlier_weight)

    def lane_graph_loss(self, control: np.ndarray) -> float:
        return lane_graph_loss(self.graph(control), self.gt, self.match, self.roi, self.settings.loss.bce_eps)

    def objective(self, control: np.ndarray) -> float:
        """Exact L_X + alpha L_C."""
        return self.lane_graph_loss(control) + self.alpha * self._clustering_term(control)

    def smooth_objective(self, control: np.ndarray) -> float:
        """The objective with the control-point L1 replaced by its Huber smoothing."""
        value = self.lane_graph_loss(control)
        if len(self._est_idx):
            residual = control[self._est_idx] - self._gt_matched
            value += float(_huber(residual, self.delta).sum() - np.abs(residual).sum()) / (
                3.0 * len(self._est_idx)
            )
        return value + self.alpha * self._clustering_term(control)

    def gradient(self, control: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(control)
        n_pairs = len(self._est_idx)
        if n_pairs:
            residual = control[self._est_idx] - self._gt_matched
            grad[self._est_idx] = np.clip(residual / self.delta, -1.0, 1.0) / (3.0 * n_pairs)

        if self._clustering_active:
            logits, params = self._distance_logits(control)
            upstream = clustering_loss_grad(logits, self.z_bar, self.settings.loss.outlier_weight)
            meters = self.meters(control)
            for i, t in enumerate(params):
                basis = bernstein(t)
                offset = evaluate(meters[i], t) - self.centers
                # d logit / d P_k = -b_k(t*) (B(t*) - c) / sigma^2
                d_logit = -basis[:, :, None] * offset[:, None, :] / self.sigma**2
                grad[i] += self.alpha * np.einsum("j,jkd->kd", upstream[:, i], d_logit) * self.roi.span
        return grad


def descend_curves(
    pred: LaneGraph,
    gt: LaneGraph,
    objects: Sequence[DetectionBox],
    logits: np.ndarray | None = None,
    alpha: float | None = None,
    lr: float = 1e-3,
    steps: int = 1,
    settings: Settings = DEFAULT_SETTINGS,
) -> DescentResult:
    """
    Plain gradient descent on the predicted control points. The trace holds
    the exact objective before the first step and after every step.
    """
    if not lr > 0.0:
        raise ValidationError(f"lr={lr} must be positive")
    if steps < 1:
        raise ValidationError(f"steps={steps} must be at least 1")

    problem = DescentProblem(pred, gt, objects, logits, alpha, settings)
    control = problem.initial()
    initial = problem.objective(control)
    trace = [initial]
    lane_trace = [problem.lane_graph_loss(control)]
    limit = DIVERGENCE_FACTOR * max(initial, 1e-12)

    for step in range(1, steps + 1):
        control = control - lr * problem.gradient(control)
        if not np.all(np.isfinite(control)):
            raise NumericalError(f"descent produced non-finite control points at step {step}", trace)
        value = problem.objective(control)
        trace.append(value)
        lane_trace.append(problem.lane_graph_loss(control))
        logger.debug("descent step %d: loss %.10g", step, value)
        if not math.isfinite(value) or value > limit:
            raise NumericalError(
                f"descent diverged at step {step}: loss {value!r} exceeds {DIVERGENCE_FACTOR:g}x "
                f"the initial {initial!r}",
                trace,
            )

    return DescentResult(problem.graph(control), tuple(trace), tuple(lane_trace))
