"""Shared fixtures for the lane-cluster test suite."""

from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from lane_cluster.geometry import DEFAULT_ROI, LaneGraph
from lane_cluster.log import ROOT_LOGGER
from lane_cluster.objects import DetectionBox


def straight_lanes(xs, z0: float = 2.0, z1: float = 49.0, edges=(), existence=None) -> LaneGraph:
    control = [[[x, z0], [x, 0.5 * (z0 + z1)], [x, z1]] for x in xs]
    return LaneGraph.from_control_points(np.array(control, dtype=float).reshape(-1, 3, 2), edges, existence)


def box_at(x: float, z: float, length: float = 4.5, width: float = 1.9, yaw: float = math.pi / 2) -> DetectionBox:
    """Car-sized box; the default yaw points along +z."""
    return DetectionBox.from_footprint((x, 0.8, z), length, width, 1.6, yaw=yaw)


@pytest.fixture
def roi():
    return DEFAULT_ROI


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def three_lanes() -> LaneGraph:
    return straight_lanes([-3.5, 0.0, 3.5])


@pytest.fixture
def make_lanes():
    return straight_lanes


@pytest.fixture
def make_box():
    return box_at


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """In-process CLI runs install a handler; undo it so caplog keeps working."""
    yield
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)
    logger.propagate = True
