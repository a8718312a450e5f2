"""
Expectation-maximization with Bezier centerlines as cluster centers.

Data points are object BEV centers. Each curve i is a mixture component
with density

    f_i(c) = exp(-D(X_i, c)^2 / (2 sigma^2)) / (2 pi sigma^2)

and a uniform background component of density `outlier_density` plays the
role of the outlier set. The E-step computes responsibilities; the M-step
refits every curve by weighted least squares on its projected parameters,
stretched so that the points it supports span t in [0, 1], and updates
the mixing weights.

Points are processed in a canonical (lexicographic) order internally so a
fit does not depend on the order of its input.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .config import EmSettings
from .errors import NumericalError, ValidationError
from .geometry import BezierCurve, LaneGraph, Vec2, as_points, bernstein, project_many
from .log import get_logger
from .membership import MembershipMatrix

logger = get_logger(__name__)

MONOTONICITY_TOL = 1e-6


@dataclass(frozen=True)
class EmConfig:
    k: int
    sigma: float = 1.0
    outlier_density: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    inner_rounds: int = 2
    freeze_weight: float = 1e-8
    damping: float = 1e-9

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k={self.k} must be at least 1")
        if not self.sigma > 0.0:
            raise ValidationError(f"sigma={self.sigma} must be positive")
        if self.outlier_density < 0.0:
            raise ValidationError(f"outlier_density={self.outlier_density} must be non-negative")
        if not self.tol > 0.0:
            raise ValidationError(f"tol={self.tol} must be positive")
        if self.max_iters < 0:
            raise ValidationError(f"max_iters={self.max_iters} must be non-negative")

    @classmethod
    def from_settings(cls, settings: EmSettings, k: int, seed: int = 0, **overrides) -> EmConfig:
        values = dict(
            k=k,
            sigma=settings.sigma,
            outlier_density=settings.outlier_density,
            max_iters=settings.max_iters,
            tol=settings.tol,
            seed=seed,
            inner_rounds=settings.inner_rounds,
            freeze_weight=settings.freeze_weight,
            damping=settings.damping,
        )
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


class TraceRow(NamedTuple):
    iteration: int
    log_likelihood: float
    delta: float


@dataclass(frozen=True)
class EmState:
    curves: tuple[BezierCurve, ...]
    mixing: np.ndarray
    responsibilities: MembershipMatrix
    log_likelihood: float
    iterations: int
    trace: tuple[TraceRow, ...] = ()
    monotonicity_violations: int = 0
    converged: bool = False

    def graph(self) -> LaneGraph:
        n = len(self.curves)
        return LaneGraph(self.curves, np.zeros((n, n), dtype=bool))


# -- densities ----------------------------------------------------------------


def _controls(curves: Sequence[BezierCurve]) -> np.ndarray:
    if not curves:
        return np.zeros((0, 3, 2))
    return np.stack([c.control for c in curves])


def _distances(points: np.ndarray, curves: Sequence[BezierCurve]) -> np.ndarray:
    """(n_points, k) distance matrix."""
    _, dist = project_many(_controls(curves), points)
    return dist.T


def _log_joint(dist: np.ndarray, mixing: np.ndarray, config: EmConfig) -> np.ndarray:
    """log(pi_i f_i(c_j)) for every curve plus the outlier column."""
    sigma2 = config.sigma**2
    with np.errstate(divide="ignore"):
        log_pi = np.log(mixing)
        log_bg = math.log(config.outlier_density) if config.outlier_density > 0.0 else -np.inf
    curve_terms = log_pi[:-1] - math.log(2.0 * math.pi * sigma2) - dist**2 / (2.0 * sigma2)
    outlier_terms = np.full((len(dist), 1), log_pi[-1] + log_bg)
    return np.hstack([curve_terms, outlier_terms])


def _check_mixing(mixing: np.ndarray, k: int) -> np.ndarray:
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (k + 1,):
        raise ValidationError(f"mixing must have {k + 1} entries, got {mixing.shape}")
    if np.any(mixing < 0.0) or abs(mixing.sum() - 1.0) > 1e-9:
        raise ValidationError(f"mixing weights must form a distribution, got {mixing}")
    return mixing


def _responsibilities(log_joint: np.ndarray) -> np.ndarray:
    norm = logsumexp(log_joint, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise NumericalError("every mixture component has zero density for some point")
    return np.exp(log_joint - norm)


def e_step(
    points: Sequence[Vec2] | np.ndarray,
    curves: Sequence[BezierCurve],
    mixing: np.ndarray,
    config: EmConfig,
) -> MembershipMatrix:
    pts = as_points(points)
    mixing = _check_mixing(mixing, len(curves))
    if len(pts) == 0:
        return MembershipMatrix(np.zeros((0, len(curves) + 1)))
    resp = _responsibilities(_log_joint(_distances(pts, curves), mixing, config))
    return MembershipMatrix(resp / resp.sum(axis=1, keepdims=True))


def log_likelihood(
    points: Sequence[Vec2] | np.ndarray,
    curves: Sequence[BezierCurve],
    mixing: np.ndarray,
    config: EmConfig,
) -> float:
    """sum_j log( sum_i pi_i f_i(c_j) + pi_A * outlier_density )"""
    pts = as_points(points)
    mixing = _check_mixing(mixing, len(curves))
    if len(pts) == 0:
        return 0.0
    return float(logsumexp(_log_joint(_distances(pts, curves), mixing, config), axis=1).sum())


# -- M-step -------------------------------------------------------------------


def _support_params(t: np.ndarray, weights: np.ndarray, floor: float) -> np.ndarray:
    """
    Stretch projected parameters so the points with weight >= floor span
    [0, 1]. The curve through noiseless data is then a fixed point of the
    refit, even when started from a longer piece of it.
    """
    support = weights >= floor
    if not np.any(support):
        return t
    lo, hi = float(t[support].min()), float(t[support].max())
    if hi - lo <= 1e-9 or (lo == 0.0 and hi == 1.0):
        return t
    return (t - lo) / (hi - lo)


def _solve(
    curve: BezierCurve, points: np.ndarray, weights: np.ndarray, t: np.ndarray, config: EmConfig
) -> BezierCurve | None:
    basis = bernstein(t)
    weighted = basis * weights[:, None]
    normal = basis.T @ weighted
    rhs = weighted.T @ points
    if np.linalg.cond(normal) > 1e12:
        # damp towards the current control points, not towards the origin
        normal = normal + config.damping * np.eye(3)
        rhs = rhs + config.damping * curve.control
    try:
        return BezierCurve.from_array(np.linalg.solve(normal, rhs))
    except (np.linalg.LinAlgError, ValidationError) as exc:
        logger.debug("refit skipped: %s", exc)
        return None


def m_step(
    points: Sequence[Vec2] | np.ndarray,
    responsibilities: MembershipMatrix,
    curves: Sequence[BezierCurve],
    config: EmConfig | None = None,
) -> tuple[tuple[BezierCurve, ...], np.ndarray]:
    """
    inner_rounds of (project every point, weighted least squares on the
    Bernstein basis) per curve, then the mixing weights.
    """
    pts = as_points(points)
    config = config or EmConfig(k=max(len(curves), 1))
    resp = responsibilities.values
    if resp.shape != (len(pts), len(curves) + 1):
        raise ValidationError(
            f"responsibilities shape {resp.shape} != ({len(pts)}, {len(curves) + 1})"
        )

    fitted = list(curves)
    active = [i for i in range(len(curves)) if resp[:, i].sum() >= config.freeze_weight]
    for _ in range(config.inner_rounds):
        if not active:
            break
        params, _ = project_many(_controls([fitted[i] for i in active]), pts)
        refined = []
        for t, i in zip(params, active):
            weights = resp[:, i]
            curve = _solve(fitted[i], pts, weights, _support_params(t, weights, config.freeze_weight), config)
            if curve is not None:
                fitted[i] = curve
                refined.append(i)
        active = refined

    if len(pts):
        mixing = resp.sum(axis=0) / len(pts)
    else:
        mixing = np.full(len(curves) + 1, 1.0 / (len(curves) + 1))
    return tuple(fitted), mixing / mixing.sum()


# -- initialization -----------------------------------------------------------


def _seed_curve(points: np.ndarray, seed_idx: int, sigma: float) -> BezierCurve:
    """
    Straight curve through a seed point. The direction is taken from the
    line through the seed with the most points within sigma, refined by
    PCA on those points; the curve spans their extent along it.
    """
    seed = points[seed_idx]
    offsets = points - seed
    lengths = np.linalg.norm(offsets, axis=1)
    candidates = lengths > 1e-9
    if np.any(candidates):
        dirs = offsets[candidates] / lengths[candidates, None]
        normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
        counts = (np.abs(offsets @ normals.T) <= sigma).sum(axis=0)
        direction = dirs[int(np.argmax(counts))]
        inliers = np.abs(offsets @ np.array([-direction[1], direction[0]])) <= sigma
        local = offsets[inliers]
        if len(local) >= 2:
            _, _, vt = np.linalg.svd(local - local.mean(axis=0), full_matrices=False)
            direction = vt[0]
    else:
        direction = np.array([0.0, 1.0])
        inliers = np.ones(len(points), dtype=bool)

    if direction[1] < 0.0 or (direction[1] == 0.0 and direction[0] < 0.0):
        direction = -direction
    along = offsets[inliers] @ direction
    lo, hi = float(along.min(initial=0.0)), float(along.max(initial=0.0))
    if hi - lo < sigma:
        lo, hi = lo - sigma, hi + sigma
    start = seed + lo * direction
    end = seed + hi * direction
    return BezierCurve.from_array([start, 0.5 * (start + end), end])


def initialize(points: np.ndarray, k: int, sigma: float, rng: np.random.Generator) -> tuple[BezierCurve, ...]:
    """k-means++ style seeding where distances are taken to the curves chosen so far."""
    curves = [_seed_curve(points, int(rng.integers(len(points))), sigma)]
    while len(curves) < k:
        d2 = _distances(points, curves).min(axis=1) ** 2
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(len(points), p=d2 / total))
        else:
            idx = int(rng.integers(len(points)))
        curves.append(_seed_curve(points, idx, sigma))
    return tuple(curves)


# -- driver -------------------------------------------------------------------


def fit(points: Sequence[Vec2] | np.ndarray, config: EmConfig) -> EmState:
    pts = as_points(points)
    if len(pts) < 3 * config.k:
        raise ValidationError(
            f"underdetermined: {len(pts)} points for k={config.k} curves (need {3 * config.k})"
        )

    order = np.lexsort((pts[:, 1], pts[:, 0]))
    work = pts[order]
    rng = np.random.default_rng(config.seed)

    curves = initialize(work, config.k, config.sigma, rng)
    mixing = np.full(config.k + 1, 1.0 / (config.k + 1))
    log_joint = _log_joint(_distances(work, curves), mixing, config)
    ll = float(logsumexp(log_joint, axis=1).sum())
    trace = [TraceRow(0, ll, 0.0)]
    violations = 0
    converged = False

    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        resp = MembershipMatrix(_normalized(_responsibilities(log_joint)))
        curves, mixing = m_step(work, resp, curves, config)
        log_joint = _log_joint(_distances(work, curves), mixing, config)
        new_ll = float(logsumexp(log_joint, axis=1).sum())
        delta = new_ll - ll
        trace.append(TraceRow(iteration, new_ll, delta))
        logger.debug("em iteration %d: log-likelihood %.10g (delta %.3g)", iteration, new_ll, delta)
        if delta < -MONOTONICITY_TOL:
            violations += 1
            logger.warning("log-likelihood decreased by %.3g at iteration %d", -delta, iteration)
        ll = new_ll
        if abs(delta) < config.tol:
            converged = True
            break

    resp_sorted = _normalized(_responsibilities(log_joint))
    resp = np.empty_like(resp_sorted)
    resp[order] = resp_sorted
    return EmState(
        curves=tuple(curves),
        mixing=mixing,
        responsibilities=MembershipMatrix(resp),
        log_likelihood=ll,
        iterations=iteration,
        trace=tuple(trace),
        monotonicity_violations=violations,
        converged=converged,
    )


def _normalized(resp: np.ndarray) -> np.ndarray:
    return resp / resp.sum(axis=1, keepdims=True)
