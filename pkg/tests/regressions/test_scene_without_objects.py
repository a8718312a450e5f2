"""
Label and descent calls on a scene with no objects.

Empty object lists must flow through every stage: zero-row memberships, a
zero clustering loss, and a descent that only sees the lane graph loss.
"""

import numpy as np

from lane_cluster.geometry import LaneGraph
from lane_cluster.pipeline import build_labels, descend_curves


def lanes(xs):
    return LaneGraph.from_control_points([[[x, 2.0], [x, 25.5], [x, 49.0]] for x in xs])


def test_scene_without_objects():
    gt = lanes([-3.5, 0.0, 3.5])
    pred = lanes([-3.0, 0.5])

    bundle = build_labels(pred, gt, [])
    assert bundle.z_star.shape == (0, 4), bundle.z_star.shape
    assert bundle.z_bar.shape == (0, 3), bundle.z_bar.shape
    assert bundle.losses.clustering_loss == 0.0
    assert bundle.losses.total == bundle.losses.lane_graph_loss

    result = descend_curves(pred, gt, [], alpha=1.0, lr=1e-3, steps=10)
    assert result.trace == result.lane_graph_trace
    assert result.trace[-1] < result.trace[0]
    assert np.all(np.isfinite(result.graph.control_points()))


if __name__ == "__main__":
    test_scene_without_objects()
    print("test_scene_without_objects: PASSED")
