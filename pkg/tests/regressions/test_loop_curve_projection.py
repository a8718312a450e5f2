"""
Closest point on a curve whose endpoints coincide.

A curve with p0 == p2 folds back on itself. Projection used to be able to
return the far end of the fold; the nearest point must always win, and
ties must resolve to the smallest parameter.
"""

import math

import numpy as np

from lane_cluster.geometry import BezierCurve, Vec2, closest_point, project_points


def test_loop_curve_projection():
    loop = BezierCurve.from_array([[0.0, 0.0], [0.0, 10.0], [0.0, 0.0]])

    # the fold tip B(0.5) = (0, 5)
    t, dist = closest_point(loop, Vec2(0.0, 7.0))
    assert abs(t - 0.5) < 1e-6, f"expected the fold tip, got t={t}"
    assert abs(dist - 2.0) < 1e-9, f"unexpected distance {dist}"

    # (1, 2) is equally close to both legs of the fold; the first leg wins
    t, dist = closest_point(loop, Vec2(1.0, 2.0))
    assert t < 0.5, f"tie must resolve to the smaller parameter, got t={t}"
    assert abs(dist - 1.0) < 1e-9, f"unexpected distance {dist}"

    # the shared endpoint
    t, dist = closest_point(loop, Vec2(0.0, -3.0))
    assert t == 0.0, f"expected t=0, got {t}"
    assert math.isclose(dist, 3.0)

    ts, ds = project_points(loop, np.array([[0.0, 7.0], [0.0, -3.0]]))
    assert ts.shape == ds.shape == (2,)


if __name__ == "__main__":
    test_loop_curve_projection()
    print("test_loop_curve_projection: PASSED")
