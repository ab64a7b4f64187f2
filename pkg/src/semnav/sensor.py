"""Simulated Bayesian semantic camera over a ground-truth scene.

Stands in for a dropout-sampled segmentation network: a view is rendered
from the annotated scene (exact depth per pixel), then T stochastic
"forward passes" are simulated per pixel as softmax(e + noise), where e is
the one-hot logit vector of the pixel's true class and the logit noise
grows with depth and with proximity to class boundaries. The per-pixel mean
softmax and the unbiased (T-1) sample standard deviation form the
measurement, exactly the statistics a dropout ensemble reports.

The boundary-sensitive noise is what makes view planning meaningful here:
close, well-aimed views genuinely reduce uncertainty faster than distant or
redundant ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose6D
from .nbv import render_visibility
from .semantic_cloud import ClassCatalog, SemanticPointCloud, ViewMeasurement


@dataclass
class GroundTruthScene:
    """Annotated surface points; doubles as the safety-evaluation oracle."""

    positions: np.ndarray
    true_classes: np.ndarray
    catalog: ClassCatalog
    boundary_distance: np.ndarray = field(init=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.true_classes = np.asarray(self.true_classes, dtype=np.int64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (n, 3)")
        if len(self.true_classes) != len(self.positions):
            raise ValueError("one class per point required")
        C = self.catalog.num_classes
        if ((self.true_classes < 0) | (self.true_classes >= C)).any():
            raise ValueError("true_class outside the catalog")
        self.boundary_distance = self._boundary_distances()

    def _boundary_distances(self) -> np.ndarray:
        """Distance from each point to the nearest point of another class."""
        n = len(self.positions)
        out = np.full(n, np.inf)
        for cls in np.unique(self.true_classes):
            mine = self.true_classes == cls
            others = ~mine
            if not others.any():
                continue
            tree = cKDTree(self.positions[others])
            d, _ = tree.query(self.positions[mine], k=1)
            out[mine] = d
        out[~np.isfinite(out)] = 0.0
        return out

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def unsafe_point_mask(self) -> np.ndarray:
        unsafe = self.catalog.unsafe_indices
        return np.isin(self.true_classes, unsafe)

    def make_cloud(self) -> SemanticPointCloud:
        """Fresh (uninformed) semantic cloud over the scene geometry."""
        return SemanticPointCloud(self.positions, self.catalog)


@dataclass(frozen=True)
class NoiseModel:
    """Logit-space noise of the simulated segmentation ensemble.

    Per-class noise std at a pixel is
    ``distance_coeff * depth + boundary_coeff * exp(-boundary_distance / boundary_scale)``;
    the true class enters with logit `base_logit`, all others with zero.
    """

    base_logit: float = 6.0
    distance_coeff: float = 0.42
    boundary_coeff: float = 1.2
    boundary_scale: float = 0.25
    passes: int = 50

    def __post_init__(self):
        if self.passes < 2:
            raise ValueError("need at least two passes for a sample std")
        if min(self.distance_coeff, self.boundary_coeff, self.boundary_scale) < 0:
            raise ValueError("noise coefficients must be >= 0")

    def zero_noise(self, base_logit: float = 25.0) -> "NoiseModel":
        return NoiseModel(base_logit=base_logit, distance_coeff=0.0,
                          boundary_coeff=0.0, boundary_scale=self.boundary_scale,
                          passes=self.passes)


@dataclass
class RenderedView:
    depth: np.ndarray        # (H, W); <= 0 marks invalid pixels
    true_class: np.ndarray   # (H, W) int64; -1 where invalid
    probs: np.ndarray        # (H, W, C) mean softmax
    uncerts: np.ndarray      # (H, W, C) sample std


def render_ground_truth(scene: GroundTruthScene, cloud: SemanticPointCloud,
                        pose: Pose6D, K: np.ndarray, image_size):
    """Exact depth and true-class maps via the shared splatting renderer.

    The scene's points are the cloud's points (belief over the same
    geometry), so visibility is rendered from the cloud and classes looked
    up in the scene annotation. Invalid pixels carry depth 0 and class -1.
    """
    vis = render_visibility(cloud, pose, K, image_size)
    covered = vis.point_index >= 0
    depth = np.where(covered, vis.depth, 0.0)
    classes = np.full(vis.point_index.shape, -1, dtype=np.int64)
    classes[covered] = scene.true_classes[vis.point_index[covered]]
    return depth, classes, vis


def simulate_passes(class_map: np.ndarray, depth: np.ndarray,
                    boundary_map: np.ndarray, catalog: ClassCatalog,
                    noise: NoiseModel, seed: int) -> RenderedView:
    """Monte-Carlo ensemble statistics per pixel.

    `boundary_map` carries the boundary distance of each pixel's surface
    point. The mean is accumulated pass by pass and the std recomputed in a
    second pass with the unbiased T-1 divisor, so an independent two-pass
    recomputation over the same samples reproduces the outputs bit for bit.
    """
    H, W = class_map.shape
    C = catalog.num_classes
    T = noise.passes
    probs = np.zeros((H, W, C))
    uncerts = np.zeros((H, W, C))
    valid = class_map >= 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        return RenderedView(depth, class_map, probs, uncerts)

    logits = np.zeros((n_valid, C))
    logits[np.arange(n_valid), class_map[valid]] = noise.base_logit
    std = (noise.distance_coeff * depth[valid]
           + noise.boundary_coeff * np.exp(-boundary_map[valid] / noise.boundary_scale))

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    eps = rng.standard_normal((T, n_valid, C)) * std[None, :, None]
    z = logits[None, :, :] + eps
    z -= z.max(axis=2, keepdims=True)      # stable softmax
    samples = np.exp(z)
    samples /= samples.sum(axis=2, keepdims=True)

    mean = np.zeros((n_valid, C))
    for t in range(T):
        mean += samples[t]
    mean /= T
    sq = np.zeros((n_valid, C))
    for t in range(T):
        sq += (samples[t] - mean) ** 2
    sigma = np.sqrt(sq / (T - 1))

    probs[valid] = mean
    uncerts[valid] = sigma
    return RenderedView(depth, class_map, probs, uncerts)


def take_view(scene: GroundTruthScene, cloud: SemanticPointCloud, pose: Pose6D,
              K: np.ndarray, image_size, noise: NoiseModel,
              seed: int) -> ViewMeasurement:
    """Render + simulate: one packaged measurement, deterministic per seed."""
    depth, classes, vis = render_ground_truth(scene, cloud, pose, K, image_size)
    boundary = np.zeros_like(depth)
    covered = vis.point_index >= 0
    boundary[covered] = scene.boundary_distance[vis.point_index[covered]]
    view = simulate_passes(classes, depth, boundary, scene.catalog, noise, seed)
    return ViewMeasurement(intrinsics=np.asarray(K, dtype=np.float64), pose=pose,
                           depth=view.depth, probs=view.probs, uncerts=view.uncerts)
