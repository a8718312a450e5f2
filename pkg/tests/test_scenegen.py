"""
Tests for lane_cluster.scenegen: determinism, lane layouts, object and
outlier placement and graph perturbation.
"""

import numpy as np
import pytest

from lane_cluster.errors import ValidationError
from lane_cluster.geometry import LaneGraph, distance_matrix
from lane_cluster.matching import match_graphs
from lane_cluster.membership import true_membership
from lane_cluster.objects import bev_centers, short_side
from lane_cluster.scenegen import PATTERNS, SceneSpec, generate_scene, perturb_graph


@pytest.mark.parametrize("pattern", PATTERNS)
def test_same_spec_same_scene(pattern):
    spec = SceneSpec(n_lanes=3, pattern=pattern, objects_per_lane=4, n_outliers=2, seed=11)
    a, b = generate_scene(spec), generate_scene(spec)
    assert a.gt_graph == b.gt_graph
    assert a.objects == b.objects
    assert a.gen_membership == b.gen_membership


def test_different_seeds_differ():
    a = generate_scene(SceneSpec(seed=1))
    b = generate_scene(SceneSpec(seed=2))
    assert a.objects != b.objects


def test_object_and_label_counts():
    scene = generate_scene(SceneSpec(n_lanes=3, objects_per_lane=5, n_outliers=4, seed=0))
    assert len(scene.objects) == 19
    assert scene.gen_membership.shape == (19, 4)
    labels = scene.gen_membership.labels()
    np.testing.assert_array_equal(np.bincount(labels, minlength=4), [5, 5, 5, 4])


def test_generated_labels_agree_with_true_membership():
    for seed in range(5):
        scene = generate_scene(SceneSpec(n_lanes=3, objects_per_lane=8, n_outliers=3, seed=seed))
        assert true_membership(scene.gt_graph, scene.objects) == scene.gen_membership


def test_lane_objects_stay_within_clip_limit():
    spec = SceneSpec(n_lanes=2, objects_per_lane=30, lateral_noise_sigma=5.0, seed=4)
    scene = generate_scene(spec)
    dist = distance_matrix(scene.gt_graph, bev_centers(scene.objects))
    own = dist[scene.gen_membership.labels(), np.arange(len(scene.objects))]
    assert np.all(own <= 0.49 * spec.short_side + 1e-9)


def test_zero_noise_objects_sit_on_their_lanes():
    scene = generate_scene(SceneSpec(n_lanes=2, objects_per_lane=5, lateral_noise_sigma=0.0, seed=2))
    dist = distance_matrix(scene.gt_graph, bev_centers(scene.objects))
    own = dist[scene.gen_membership.labels(), np.arange(len(scene.objects))]
    np.testing.assert_allclose(own, 0.0, atol=1e-6)


def test_objects_use_the_spec_footprint():
    scene = generate_scene(SceneSpec(n_lanes=1, objects_per_lane=3, footprint=(5.0, 2.2), seed=0))
    assert all(short_side(box) == pytest.approx(2.2) for box in scene.objects)


def test_outliers_without_lanes():
    scene = generate_scene(SceneSpec(n_lanes=0, n_outliers=3, seed=0))
    assert len(scene.gt_graph) == 0
    assert scene.gen_membership.shape == (3, 1)
    np.testing.assert_array_equal(scene.gen_membership.labels(), [0, 0, 0])


def test_outliers_keep_clear_of_lanes():
    spec = SceneSpec(n_lanes=3, objects_per_lane=0, n_outliers=10, seed=6)
    scene = generate_scene(spec)
    dist = distance_matrix(scene.gt_graph, bev_centers(scene.objects))
    assert np.all(dist >= spec.short_side + 0.5)


def test_fork_branches_start_at_trunk_end():
    graph = generate_scene(SceneSpec(n_lanes=3, pattern="fork", objects_per_lane=0)).gt_graph
    control = graph.control_points()
    assert graph.edges() == [(0, 1), (0, 2)]
    np.testing.assert_array_equal(control[1, 0], control[0, 2])
    np.testing.assert_array_equal(control[2, 0], control[0, 2])


def test_merge_branches_end_at_trunk_start():
    graph = generate_scene(SceneSpec(n_lanes=3, pattern="merge", objects_per_lane=0)).gt_graph
    control = graph.control_points()
    assert graph.edges() == [(0, 2), (1, 2)]
    np.testing.assert_array_equal(control[0, 2], control[2, 0])
    np.testing.assert_array_equal(control[1, 2], control[2, 0])
    # every lane runs towards +z
    assert np.all(control[:, 2, 1] > control[:, 0, 1])


def test_mixed_lanes_share_one_bend():
    graph = generate_scene(SceneSpec(n_lanes=3, pattern="mixed", objects_per_lane=0, seed=5)).gt_graph
    control = graph.control_points()
    bends = control[:, 1, 0] - control[:, 0, 0]
    np.testing.assert_allclose(bends, bends[0])


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"pattern": "spiral"}, "unknown pattern"),
        ({"n_lanes": 1, "pattern": "fork"}, "at least 2 lanes"),
        ({"n_lanes": -1}, "non-negative"),
        ({"lane_gap": 0.0}, "lane_gap"),
        ({"footprint": (4.5, 0.0)}, "footprint"),
    ],
)
def test_spec_validation(kwargs, message):
    with pytest.raises(ValidationError, match=message):
        SceneSpec(**kwargs)


def test_layout_must_fit_region():
    with pytest.raises(ValidationError, match="do not fit"):
        generate_scene(SceneSpec(n_lanes=20, lane_gap=3.5))


# -- perturbation -------------------------------------------------------------


def test_perturb_without_noise_is_identity(three_lanes):
    assert perturb_graph(three_lanes, 0.0, 0.0, seed=0) == three_lanes
    assert perturb_graph(three_lanes, 0.0, 0.0, seed=0).existence is None


def test_perturb_drops_everything_at_probability_one(three_lanes):
    assert len(perturb_graph(three_lanes, 0.0, 1.0, seed=0)) == 0


def test_perturb_is_seeded_and_lowers_existence(three_lanes):
    a = perturb_graph(three_lanes, 0.01, 0.3, seed=8)
    assert a == perturb_graph(three_lanes, 0.01, 0.3, seed=8)
    assert np.all((a.existence >= 0.0) & (a.existence <= 1.0))
    assert a != three_lanes


def test_perturb_keeps_edges_of_surviving_curves(make_lanes):
    graph = make_lanes([-3.5, 0.0, 3.5], edges=[(0, 1), (1, 2)])
    assert perturb_graph(graph, 0.0, 0.0, seed=3).edges() == [(0, 1), (1, 2)]


def test_perturb_validation(three_lanes):
    with pytest.raises(ValidationError, match="noise_sigma"):
        perturb_graph(three_lanes, -0.1, 0.0, seed=0)
    with pytest.raises(ValidationError, match="drop_prob"):
        perturb_graph(three_lanes, 0.0, 1.5, seed=0)
    assert perturb_graph(LaneGraph.empty(), 0.1, 0.5, seed=0) == LaneGraph.empty()


@pytest.mark.parametrize("pattern", PATTERNS)
def test_small_perturbation_keeps_identity_match(pattern):
    gt = generate_scene(SceneSpec(n_lanes=4, pattern=pattern, objects_per_lane=0)).gt_graph
    for seed in range(10):
        assert match_graphs(perturb_graph(gt, 0.01, 0.0, seed=seed), gt).h == (0, 1, 2, 3)
