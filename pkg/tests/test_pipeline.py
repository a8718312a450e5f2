"""
Tests for lane_cluster.pipeline: label bundles and curve descent with
frozen matching.
"""

import math

import numpy as np
import pytest

from lane_cluster.config import DEFAULT_SETTINGS
from lane_cluster.errors import NumericalError, ValidationError
from lane_cluster.geometry import LaneGraph, Vec2
from lane_cluster.objects import bev_center, bev_centers
from lane_cluster.pipeline import DescentProblem, build_labels, descend_curves
from lane_cluster.scenegen import SceneSpec, generate_scene, perturb_graph


@pytest.fixture
def scene_objects(make_box):
    # two objects on lanes 0 and 2, one far outside every lane
    return [make_box(-3.5, 12.0), make_box(3.4, 30.0), make_box(15.0, 20.0)]


# -- labels -------------------------------------------------------------------


def test_uniform_logits_give_diagnostic_value(three_lanes, scene_objects):
    bundle = build_labels(three_lanes, three_lanes, scene_objects)
    assert bundle.uniform_logits
    np.testing.assert_array_equal(bundle.z_star.labels(), [0, 2, 3])
    np.testing.assert_array_equal(bundle.z_bar.labels(), [0, 2, 3])
    expected = (2 + 0.1) / 3 * math.log(4)
    assert bundle.losses.clustering_loss == pytest.approx(expected, abs=1e-9)
    assert bundle.losses.total == pytest.approx(bundle.losses.lane_graph_loss + expected)


def test_sharp_correct_logits_cost_almost_nothing(three_lanes, scene_objects):
    logits = np.full((3, 4), -50.0)
    logits[[0, 1, 2], [0, 2, 3]] = 50.0
    bundle = build_labels(three_lanes, three_lanes, scene_objects, logits)
    assert not bundle.uniform_logits
    assert bundle.losses.total <= 1e-6


def test_labels_follow_estimated_order(three_lanes, scene_objects):
    pred = three_lanes.subgraph([2, 1, 0])
    bundle = build_labels(pred, three_lanes, scene_objects, alpha=0.5)
    np.testing.assert_array_equal(bundle.z_bar.labels(), [2, 0, 3])
    assert bundle.match.h == (2, 1, 0)
    assert bundle.losses.alpha == 0.5


def test_labels_follow_object_order():
    scene = generate_scene(SceneSpec(n_lanes=3, pattern="fork", objects_per_lane=4, n_outliers=3, seed=6))
    pred = perturb_graph(scene.gt_graph, 0.01, 0.0, seed=1)
    logits = np.random.default_rng(3).normal(size=(len(scene.objects), len(pred) + 1))
    perm = np.random.default_rng(9).permutation(len(scene.objects))

    a = build_labels(pred, scene.gt_graph, scene.objects, logits)
    b = build_labels(pred, scene.gt_graph, [scene.objects[i] for i in perm], logits[perm])
    np.testing.assert_array_equal(b.z_star.values, a.z_star.values[perm])
    np.testing.assert_array_equal(b.z_bar.values, a.z_bar.values[perm])
    assert b.match == a.match
    assert b.losses.clustering_loss == pytest.approx(a.losses.clustering_loss, abs=1e-12)
    assert b.losses.lane_graph_loss == a.losses.lane_graph_loss


def test_labels_without_objects(three_lanes):
    bundle = build_labels(three_lanes, three_lanes, [])
    assert bundle.z_star.shape == (0, 4)
    assert bundle.losses.clustering_loss == 0.0


def test_refined_centers(three_lanes, scene_objects):
    shifted = bev_centers(scene_objects) + [0.5, 0.0]
    bundle = build_labels(three_lanes, three_lanes, scene_objects, refined_centers=shifted)
    assert bundle.losses.refine_loss == pytest.approx(0.5)
    assert bev_center(bundle.refined_objects[0]) == Vec2(-3.0, 12.0)
    with pytest.raises(ValidationError, match="refined centers"):
        build_labels(three_lanes, three_lanes, scene_objects, refined_centers=shifted[:2])


def test_logits_shape_checked(three_lanes, scene_objects):
    with pytest.raises(ValidationError, match="logits shape"):
        build_labels(three_lanes, three_lanes, scene_objects, np.zeros((3, 3)))


# -- descent ------------------------------------------------------------------


def test_single_curve_converges_monotonically(make_lanes):
    gt = make_lanes([0.0])
    # 2.5 m is 0.05 in normalized x
    pred = make_lanes([2.5])
    result = descend_curves(pred, gt, [], lr=1e-3, steps=500)
    assert len(result.trace) == 501
    assert result.trace[-1] < 0.01 * result.trace[0]
    assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
    np.testing.assert_allclose(result.graph.control_points()[:, :, 0], 0.0, atol=0.05)


def test_exact_estimate_does_not_move(three_lanes, scene_objects):
    result = descend_curves(three_lanes, three_lanes, scene_objects, alpha=0.0, steps=10)
    assert result.graph == three_lanes
    assert len(set(result.trace)) == 1


def test_zero_alpha_ignores_objects(make_lanes, scene_objects):
    gt = make_lanes([-3.5, 0.0, 3.5])
    pred = make_lanes([-3.0, 0.4, 3.1])
    with_objects = descend_curves(pred, gt, scene_objects, alpha=0.0, lr=1e-3, steps=20)
    without = descend_curves(pred, gt, [], alpha=0.0, lr=1e-3, steps=20)
    assert with_objects.trace == without.trace
    assert with_objects.graph == without.graph


def test_clustering_term_pulls_curves_towards_objects(make_lanes, make_box):
    gt = make_lanes([-3.5, 0.0, 3.5])
    pred = make_lanes([-2.5, 1.0, 4.5])
    objects = [make_box(x, z) for x in (-3.5, 0.0, 3.5) for z in (10.0, 25.0, 40.0)]
    result = descend_curves(pred, gt, objects, alpha=1.0, lr=1e-4, steps=100)
    assert result.trace[-1] < result.trace[0]
    assert result.lane_graph_trace[-1] < result.lane_graph_trace[0]
    assert len(result.lane_graph_trace) == 101


def test_gradient_matches_finite_differences(make_box, rng):
    control = np.array(
        [
            [[-3.2, 2.5], [-2.8, 25.0], [-3.6, 48.0]],
            [[0.4, 3.0], [0.9, 24.0], [0.2, 47.5]],
        ]
    )
    pred = LaneGraph.from_control_points(control, existence=[0.9, 0.7])
    gt = LaneGraph.from_control_points(
        [[[-3.5, 2.0], [-3.5, 25.5], [-3.5, 49.0]], [[0.0, 2.0], [0.0, 25.5], [0.0, 49.0]]]
    )
    objects = [make_box(-3.3, 15.0), make_box(0.3, 20.0), make_box(0.1, 35.0), make_box(8.0, 30.0)]
    logits = rng.normal(size=(4, 3))
    problem = DescentProblem(pred, gt, objects, logits, alpha=0.7, settings=DEFAULT_SETTINGS)

    x = problem.initial()
    grad = problem.gradient(x)
    eps = 1e-7
    numeric = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += eps
        down[idx] -= eps
        numeric[idx] = (problem.smooth_objective(up) - problem.smooth_objective(down)) / (2 * eps)
    np.testing.assert_allclose(grad, numeric, atol=1e-4 * np.abs(grad).max())


def test_divergence_raises_with_trace(make_lanes):
    gt = make_lanes([0.0])
    pred = make_lanes([2.5])
    with pytest.raises(NumericalError, match="diverged") as info:
        descend_curves(pred, gt, [], lr=100.0, steps=5)
    assert len(info.value.trace) == 2
    assert info.value.trace[0] == pytest.approx(0.05, abs=1e-6)
    assert info.value.exit_code == 2


@pytest.mark.parametrize(
    "kwargs, message",
    [({"lr": 0.0}, "lr"), ({"steps": 0}, "steps"), ({"alpha": -1.0}, "alpha")],
)
def test_descent_arguments_validated(three_lanes, kwargs, message):
    with pytest.raises(ValidationError, match=message):
        descend_curves(three_lanes, three_lanes, [], **kwargs)
