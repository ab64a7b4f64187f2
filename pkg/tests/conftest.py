import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from semnav.semantic_cloud import ClassCatalog, SemanticPointCloud


@pytest.fixture
def catalog4():
    """Four classes, two safe, two unsafe; the default test catalog."""
    return ClassCatalog(("grass", "gravel", "water", "mud"),
                        frozenset({0, 1}), frozenset({2, 3}))


@pytest.fixture
def flat_cloud(catalog4):
    """A fresh 20x20 grid of points at z=0, spacing 0.2."""
    xs = np.arange(20) * 0.2
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    return SemanticPointCloud(pts, catalog4)


def set_belief(cloud, indices, class_id, sigma=0.01):
    """Force a crisp belief on selected points (bypasses fusion; test rig)."""
    C = cloud.num_classes
    p = np.full(C, (1.0 - 0.97) / (C - 1))
    p[class_id] = 0.97
    cloud.probs[indices] = p
    cloud.uncerts[indices] = sigma
    cloud.measurement_count[indices] = 1
    cloud._precision[indices] = sigma**-2
    cloud._weighted[indices] = sigma**-2 * p
