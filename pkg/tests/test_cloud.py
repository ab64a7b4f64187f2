"""Cloud storage, spatial index, view integration, serialization."""

import numpy as np
import pytest

from semnav.fusion import FusionMode
from semnav.geometry import Pose6D
from semnav.io_formats import (export_ply, load_cloud,
                               read_ply_vertex_count, save_cloud)
from semnav.semantic_cloud import (SafetyLabel, SafetyParams, SemanticPointCloud,
                                   ViewMeasurement, init_cloud, integrate_view,
                                   partition_cloud)

from conftest import set_belief


def make_view(K, pose, depth, probs, uncerts):
    return ViewMeasurement(intrinsics=K, pose=pose, depth=depth,
                           probs=probs, uncerts=uncerts)


def one_pixel_view(target, K=None, sigma=0.0, class_id=0, num_classes=4):
    """A 1x1 view whose single pixel backprojects exactly onto `target`."""
    if K is None:
        K = np.array([[50.0, 0, 0], [0, 50.0, 0], [0, 0, 1.0]])
    depth = np.array([[float(target[2] if target[2] > 0 else 1.0)]])
    # camera at z below the target looking +z: place camera so ray hits target
    pose = Pose6D(np.eye(3), np.array([target[0], target[1], target[2] - depth[0, 0]]))
    probs = np.zeros((1, 1, num_classes))
    probs[0, 0, class_id] = 1.0
    uncerts = np.full((1, 1, num_classes), sigma)
    return make_view(K, pose, depth, probs, uncerts)


class TestInit:
    def test_uniform_initialization(self, catalog4):
        cloud = init_cloud(np.array([[0.0, 0, 0]]), catalog4)
        np.testing.assert_array_equal(cloud.probs[0], [0.25] * 4)
        np.testing.assert_array_equal(cloud.uncerts[0], [0.5] * 4)
        assert cloud.measurement_count[0] == 0

    def test_fresh_cloud_partitions_unclear(self, catalog4):
        cloud = init_cloud(np.random.default_rng(0).uniform(0, 1, (30, 3)),
                           catalog4)
        part = partition_cloud(cloud, catalog4, SafetyParams(0.9, 0.3, 3.0))
        assert part.count(SafetyLabel.UNCLEAR) == 30

    def test_resolution_is_median_nn_distance(self, catalog4):
        cloud = init_cloud(np.array([[0.0, 0, 0], [0.1, 0, 0]]), catalog4)
        assert cloud.resolution == pytest.approx(0.1)

    def test_rejects_empty_and_nonfinite(self, catalog4):
        with pytest.raises(ValueError):
            init_cloud(np.zeros((0, 3)), catalog4)
        with pytest.raises(ValueError):
            init_cloud(np.array([[np.nan, 0, 0]]), catalog4)


class TestSpatialIndex:
    def test_knn_matches_linear_scan(self, catalog4):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-3, 3, (400, 3))
        cloud = init_cloud(pts, catalog4)
        for _ in range(25):
            q = rng.uniform(-3, 3, 3)
            k = int(rng.integers(1, 12))
            d, idx = cloud.knn(q, k)
            brute = np.argsort(np.linalg.norm(pts - q, axis=1))[:k]
            np.testing.assert_array_equal(np.sort(np.atleast_1d(idx)),
                                          np.sort(brute))


class TestIntegrateView:
    def test_far_view_discards_everything(self, flat_cloud):
        K = np.array([[50.0, 0, 16], [0, 50.0, 16], [0, 0, 1]])
        pose = Pose6D(np.eye(3), np.array([500.0, 500.0, -5.0]))
        depth = np.full((8, 8), 2.0)
        probs = np.full((8, 8, 4), 0.25)
        uncerts = np.full((8, 8, 4), 0.1)
        before = flat_cloud.probs.copy()
        report = integrate_view(flat_cloud, make_view(K, pose, depth, probs, uncerts),
                                merge_radius=0.1)
        assert report.merged == 0
        assert report.discarded == 64
        np.testing.assert_array_equal(flat_cloud.probs, before)

    def test_one_hot_measurement_flips_argmax(self, flat_cloud):
        target = flat_cloud.positions[25]
        view = one_pixel_view(np.array([target[0], target[1], 1.0]), class_id=2)
        # camera 1 m above, looking down is not needed: the view's pixel
        # backprojects onto (x, y, 1.0); move the cloud point there instead
        view.pose = Pose6D(np.eye(3), target - np.array([0.0, 0.0, 1.0]))
        view.depth[0, 0] = 1.0
        report = integrate_view(flat_cloud, view, merge_radius=0.05)
        assert report.merged == 1
        assert flat_cloud.probs[25].argmax() == 2
        assert flat_cloud.measurement_count[25] == 1

    def test_repeat_views_never_increase_sigma(self, flat_cloud):
        target = flat_cloud.positions[12]
        view = one_pixel_view(np.array([target[0], target[1], 1.0]), class_id=1)
        view.pose = Pose6D(np.eye(3), target - np.array([0.0, 0.0, 1.0]))
        integrate_view(flat_cloud, view, merge_radius=0.05)
        s1 = flat_cloud.uncerts[12].copy()
        integrate_view(flat_cloud, view, merge_radius=0.05)
        s2 = flat_cloud.uncerts[12]
        assert (s2 <= s1 + 1e-15).all()
        np.testing.assert_allclose(flat_cloud.probs.sum(axis=1), 1.0, atol=1e-9)

    def test_nearest_tie_breaks_to_lowest_index(self, catalog4):
        # two points symmetric about the backprojected pixel location
        pts = np.array([[-0.5, 0.0, 1.0], [0.5, 0.0, 1.0]])
        cloud = init_cloud(pts, catalog4)
        K = np.array([[50.0, 0, 0], [0, 50.0, 0], [0, 0, 1.0]])
        depth = np.array([[1.0]])
        probs = np.zeros((1, 1, 4))
        probs[0, 0, 3] = 1.0
        uncerts = np.full((1, 1, 4), 0.05)
        view = make_view(K, Pose6D.identity(), depth, probs, uncerts)
        integrate_view(cloud, view, merge_radius=1.0)
        assert cloud.measurement_count[0] == 1
        assert cloud.measurement_count[1] == 0

    def test_literal_mode_keeps_history(self, flat_cloud):
        target = flat_cloud.positions[7]
        view = one_pixel_view(np.array([target[0], target[1], 1.0]), class_id=0,
                              sigma=0.1)
        view.pose = Pose6D(np.eye(3), target - np.array([0.0, 0.0, 1.0]))
        integrate_view(flat_cloud, view, merge_radius=0.05,
                       mode=FusionMode.LITERAL_PAPER)
        assert 7 in flat_cloud._history
        assert len(flat_cloud._history[7]) == 2  # prior + measurement
        assert flat_cloud.probs[7].sum() == pytest.approx(1.0, abs=1e-9)

    def test_view_validation_rejects_off_simplex(self, flat_cloud):
        K = np.array([[50.0, 0, 0], [0, 50.0, 0], [0, 0, 1.0]])
        probs = np.full((1, 1, 4), 0.3)  # sums to 1.2
        view = make_view(K, Pose6D.identity(), np.array([[1.0]]), probs,
                         np.full((1, 1, 4), 0.1))
        with pytest.raises(ValueError):
            integrate_view(flat_cloud, view, merge_radius=0.1)


class TestSerialization:
    def test_write_read_write_is_byte_identical(self, flat_cloud, catalog4,
                                                tmp_path):
        set_belief(flat_cloud, np.arange(40), 1, sigma=0.07)
        path1 = tmp_path / "a.shpc"
        path2 = tmp_path / "b.shpc"
        save_cloud(flat_cloud, path1)
        loaded = load_cloud(path1, catalog4)
        save_cloud(loaded, path2)
        assert path1.read_bytes() == path2.read_bytes()

    def test_loaded_arrays_match_f32_quantization(self, flat_cloud, catalog4,
                                                  tmp_path):
        set_belief(flat_cloud, np.arange(10), 2, sigma=0.03)
        path = tmp_path / "c.shpc"
        save_cloud(flat_cloud, path)
        loaded = load_cloud(path, catalog4)
        np.testing.assert_array_equal(loaded.positions, flat_cloud.positions)
        np.testing.assert_array_equal(
            loaded.probs, flat_cloud.probs.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(loaded.measurement_count,
                                      flat_cloud.measurement_count)

    def test_catalog_mismatch_rejected(self, flat_cloud, tmp_path):
        from semnav.semantic_cloud import ClassCatalog
        path = tmp_path / "d.shpc"
        save_cloud(flat_cloud, path)
        other = ClassCatalog(("x", "y"), frozenset({0}), frozenset({1}))
        with pytest.raises(ValueError):
            load_cloud(path, other)


class TestPlyExport:
    def test_round_trip_point_count(self, flat_cloud, tmp_path):
        path = tmp_path / "cloud.ply"
        export_ply(flat_cloud, path, color_by="class")
        assert read_ply_vertex_count(path) == len(flat_cloud)

    def test_safety_coloring_needs_partition(self, flat_cloud, tmp_path):
        with pytest.raises(ValueError):
            export_ply(flat_cloud, tmp_path / "x.ply", color_by="safety")
