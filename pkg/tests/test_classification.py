"""Safe/unsafe/unclear classification rules."""

import numpy as np
import pytest

from semnav.semantic_cloud import (ClassCatalog, SafetyLabel, SafetyParams,
                                   SemanticPoint, SemanticPointCloud,
                                   aggregate_safety, classify_arrays,
                                   classify_point, partition_cloud)


def point(p, s):
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    return SemanticPoint(np.zeros(3), p, s, 1)


class TestAggregate:
    def test_one_hot_safe_class(self, catalog4):
        p_s, p_u, sigma = aggregate_safety(point([1, 0, 0, 0], [0, 0, 0, 0]),
                                           catalog4)
        assert (p_s, p_u, sigma) == (1.0, 0.0, 0.0)

    def test_min_rule_takes_the_certain_side(self):
        # S={0,1}, U={2}: sigma = min(sqrt(.09+.16), sqrt(.01)) = 0.1
        cat = ClassCatalog(("a", "b", "c"), frozenset({0, 1}), frozenset({2}))
        _, _, sigma = aggregate_safety(point([0.5, 0.3, 0.2], [0.3, 0.4, 0.1]), cat)
        assert sigma == pytest.approx(0.1, abs=1e-12)

    def test_uniform_init_aggregate(self, catalog4):
        # C=4, |S|=2: p_S = 0.5; sigma = sqrt(2 * 0.25) both sides
        p_s, p_u, sigma = aggregate_safety(
            point([0.25] * 4, [0.5] * 4), catalog4)
        assert p_s == pytest.approx(0.5)
        assert p_u == pytest.approx(0.5)
        assert sigma == pytest.approx(np.sqrt(0.5), abs=1e-12)
        assert p_s + p_u == pytest.approx(1.0, abs=1e-12)


class TestClassify:
    def test_safe_margin(self, catalog4):
        # 0.95 - 3*0.01 = 0.92 >= 0.9
        params = SafetyParams(0.9, 0.3, 3.0)
        label = classify_point(point([0.95, 0.0, 0.05, 0.0],
                                     [0.01, 0.0, 0.0, 0.0]), catalog4, params)
        assert label is SafetyLabel.SAFE

    def test_certain_unsafe(self, catalog4):
        label = classify_point(point([0, 0, 1, 0], [0, 0, 0, 0]), catalog4,
                               SafetyParams())
        assert label is SafetyLabel.UNSAFE

    def test_neither_margin_met_is_unclear(self, catalog4):
        # aggregated sigma = 0.2 on both sides: 0.6-0.6 < 0.9, 0.4-0.6 < 0.3
        label = classify_point(point([0.6, 0.0, 0.4, 0.0],
                                     [0.2, 0.0, 0.2, 0.0]), catalog4,
                               SafetyParams())
        assert label is SafetyLabel.UNCLEAR

    def test_params_invariant_enforced(self):
        with pytest.raises(ValueError, match="theta"):
            SafetyParams(theta_safe=0.9, theta_unsafe=0.05)

    def test_exclusivity_over_random_samples(self, catalog4):
        rng = np.random.default_rng(0)
        n = 100_000
        probs = rng.dirichlet(np.ones(4), size=n)
        uncerts = rng.uniform(0.0, 0.7, size=(n, 4))
        params = SafetyParams(0.9, 0.3, 3.0)
        # classify_arrays asserts internally that no sample is both
        labels = classify_arrays(probs, uncerts, catalog4, params)
        assert set(np.unique(labels)) <= {0, 1, 2}


class TestPartition:
    def test_fresh_cloud_all_unclear(self, flat_cloud, catalog4):
        part = partition_cloud(flat_cloud, catalog4, SafetyParams(0.9, 0.3, 3.0))
        assert part.count(SafetyLabel.UNCLEAR) == len(flat_cloud)

    def test_all_one_hot_safe(self, catalog4):
        pts = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
        cloud = SemanticPointCloud(pts, catalog4)
        cloud.probs[:] = np.array([1.0, 0.0, 0.0, 0.0])
        cloud.uncerts[:] = 0.0
        part = partition_cloud(cloud, catalog4, SafetyParams())
        assert part.count(SafetyLabel.SAFE) == 5

    def test_mixed_three_point_cloud(self, catalog4):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        cloud = SemanticPointCloud(pts, catalog4)
        cloud.probs[0] = [0.95, 0.0, 0.05, 0.0]
        cloud.uncerts[0] = [0.01, 0, 0, 0]
        cloud.probs[1] = [0.0, 0.0, 1.0, 0.0]
        cloud.uncerts[1] = 0.0
        cloud.probs[2] = [0.6, 0.0, 0.4, 0.0]
        cloud.uncerts[2] = [0.2, 0, 0.2, 0]
        part = partition_cloud(cloud, catalog4, SafetyParams())
        assert list(part.labels) == [int(SafetyLabel.SAFE),
                                     int(SafetyLabel.UNSAFE),
                                     int(SafetyLabel.UNCLEAR)]

    def test_partition_exhaustive(self, flat_cloud, catalog4):
        part = partition_cloud(flat_cloud, catalog4, SafetyParams())
        total = sum(part.count(label) for label in SafetyLabel)
        assert total == len(flat_cloud)


class TestCatalog:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError):
            ClassCatalog(("a", "b"), frozenset({0, 1}), frozenset({1}))

    def test_rejects_uncovered(self):
        with pytest.raises(ValueError):
            ClassCatalog(("a", "b", "c"), frozenset({0}), frozenset({1}))

    def test_rejects_single_class(self):
        with pytest.raises(ValueError):
            ClassCatalog(("a",), frozenset({0}), frozenset())
