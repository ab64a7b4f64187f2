"""Pixel backprojection and its round trip with forward projection."""

import math

import numpy as np
import pytest

from semnav.geometry import Pose6D, rot_x, rot_z
from semnav.semantic_cloud import backproject_pixel, backproject_pixels


def make_K(f, cx, cy):
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def forward_project(point, K, pose):
    """Independent forward model: map -> camera -> pixel + depth."""
    cam = pose.rotation.T @ (np.asarray(point) - pose.translation)
    depth = cam[2]
    u = K[0, 0] * cam[0] / depth + K[0, 2]
    v = K[1, 1] * cam[1] / depth + K[1, 2]
    return u, v, depth


def test_principal_point_is_optical_axis():
    K = make_K(100.0, 32.0, 24.0)
    out = backproject_pixel(32.0, 24.0, 5.0, K, Pose6D.identity())
    np.testing.assert_allclose(out, [0.0, 0.0, 5.0], atol=1e-12)


def test_one_focal_length_off_axis():
    # pixel (c_x + f, c_y) at depth d lands at (d, 0, d)
    f, d = 80.0, 3.0
    K = make_K(f, 40.0, 40.0)
    out = backproject_pixel(40.0 + f, 40.0, d, K, Pose6D.identity())
    np.testing.assert_allclose(out, [d, 0.0, d], atol=1e-9)


def test_round_trip_random_points_and_cameras():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        K = make_K(rng.uniform(40, 400), rng.uniform(20, 60), rng.uniform(20, 60))
        R = rot_z(rng.uniform(-np.pi, np.pi)) @ rot_x(rng.uniform(-1.0, 1.0))
        pose = Pose6D(R, rng.uniform(-5, 5, 3))
        # a point guaranteed in front of the camera
        cam_pt = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2),
                           rng.uniform(0.5, 20.0)])
        world = pose.transform(cam_pt)
        u, v, depth = forward_project(world, K, pose)
        back = backproject_pixel(u, v, depth, K, pose)
        np.testing.assert_allclose(back, world, atol=1e-9)


def test_invalid_depth_rejected():
    K = make_K(100.0, 32.0, 32.0)
    with pytest.raises(ValueError):
        backproject_pixel(0.0, 0.0, 0.0, K, Pose6D.identity())
    with pytest.raises(ValueError):
        backproject_pixel(0.0, 0.0, math.nan, K, Pose6D.identity())


def test_batch_matches_scalar():
    K = make_K(120.0, 31.5, 31.5)
    pose = Pose6D(rot_z(0.4), np.array([1.0, -2.0, 0.5]))
    cols = np.array([0.0, 10.0, 31.5, 63.0])
    rows = np.array([5.0, 20.0, 31.5, 63.0])
    depths = np.array([1.0, 2.5, 4.0, 9.0])
    batch = backproject_pixels(cols, rows, depths, K, pose)
    for i in range(len(cols)):
        single = backproject_pixel(cols[i], rows[i], depths[i], K, pose)
        np.testing.assert_allclose(batch[i], single, atol=1e-12)
