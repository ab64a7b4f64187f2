"""Uncertain semantic point cloud: storage, safety classification, view fusion.

Each point carries a 3D position, a per-class probability vector p, a
per-class uncertainty vector sigma, and a measurement counter. Fresh points
hold the uninformed prior: uniform probabilities and the maximum possible
standard deviation of a [0, 1]-valued quantity (0.5 per class), which keeps
them Unclear under any sane safety thresholds until measured.

Concurrency: a cloud supports any number of concurrent readers;
``integrate_view`` mutates fusion state and requires exclusive access.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .fusion import (SIGMA_FLOOR, FusionMode, fuse_class_measurements,
                     fused_from_sufficient_stats)
from .geometry import Pose6D

INIT_SIGMA = 0.5
SIMPLEX_TOL = 1e-9


class SafetyLabel(enum.IntEnum):
    SAFE = 0
    UNSAFE = 1
    UNCLEAR = 2


@dataclass(frozen=True)
class ClassCatalog:
    """Semantic classes partitioned into a safe set and an unsafe set."""

    class_names: tuple
    safe_set: frozenset
    unsafe_set: frozenset

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "safe_set", frozenset(self.safe_set))
        object.__setattr__(self, "unsafe_set", frozenset(self.unsafe_set))
        n = len(self.class_names)
        if n < 2:
            raise ValueError("need at least two classes")
        if self.safe_set & self.unsafe_set:
            raise ValueError("safe and unsafe sets overlap")
        if self.safe_set | self.unsafe_set != set(range(n)):
            raise ValueError("safe and unsafe sets must cover all classes")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def safe_indices(self) -> np.ndarray:
        return np.array(sorted(self.safe_set), dtype=np.intp)

    @property
    def unsafe_indices(self) -> np.ndarray:
        return np.array(sorted(self.unsafe_set), dtype=np.intp)


@dataclass(frozen=True)
class SafetyParams:
    """Thresholds of the three-way safe/unsafe/unclear rule.

    A point is safe when p_S - w_sigma * sigma >= theta_safe and unsafe when
    p_U - w_sigma * sigma >= theta_unsafe. The constructor enforces
    1 - theta_safe < theta_unsafe, which makes the two conditions mutually
    exclusive for any sigma >= 0.
    """

    theta_safe: float = 0.9
    theta_unsafe: float = 0.3
    sigma_weight: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.theta_safe <= 1.0 and 0.0 < self.theta_unsafe <= 1.0):
            raise ValueError("thresholds must lie in (0, 1]")
        if self.sigma_weight < 0.0:
            raise ValueError("sigma_weight must be >= 0")
        if not (1.0 - self.theta_safe < self.theta_unsafe):
            raise ValueError(
                f"safety params must satisfy 1 - theta_safe < theta_unsafe "
                f"(got 1 - {self.theta_safe} = {1.0 - self.theta_safe} >= {self.theta_unsafe})")


@dataclass(frozen=True)
class SemanticPoint:
    """Read-only view of one cloud point."""

    position: np.ndarray
    probs: np.ndarray
    uncerts: np.ndarray
    measurement_count: int


@dataclass
class SafetyPartition:
    """Per-point labels; exactly one of SAFE/UNSAFE/UNCLEAR each."""

    labels: np.ndarray

    def indices(self, label: SafetyLabel) -> np.ndarray:
        return np.flatnonzero(self.labels == int(label))

    def count(self, label: SafetyLabel) -> int:
        return int(np.count_nonzero(self.labels == int(label)))

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class IntegrationReport:
    merged: int
    discarded: int


class SemanticPointCloud:
    """Point positions plus evolving per-point semantic belief.

    Positions never change; only the semantic state evolves as views are
    fused in. The k-NN index and the cached resolution (median
    nearest-neighbor distance) are built once at construction.
    """

    def __init__(self, positions: np.ndarray, catalog: ClassCatalog):
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3 or len(positions) == 0:
            raise ValueError("positions must be a non-empty (n, 3) array")
        if not np.isfinite(positions).all():
            raise ValueError("positions contain non-finite coordinates")
        self.positions = positions
        self.catalog = catalog
        n, C = len(positions), catalog.num_classes
        self.probs = np.full((n, C), 1.0 / C)
        self.uncerts = np.full((n, C), INIT_SIGMA)
        self.measurement_count = np.zeros(n, dtype=np.int64)
        # Running sufficient statistics of the measurement-normalized fusion,
        # seeded with the initialization prior as measurement zero.
        init_prec = INIT_SIGMA**-2
        self._precision = np.full((n, C), init_prec)
        self._weighted = np.full((n, C), init_prec / C)
        # Full measurement histories, kept only under LITERAL_PAPER fusion.
        self._history: dict[int, list] = {}
        self._tree = cKDTree(positions)
        self.resolution = self._compute_resolution()

    def _compute_resolution(self) -> float:
        if len(self.positions) < 2:
            return 0.0
        d, _ = self._tree.query(self.positions, k=2)
        return float(np.median(d[:, 1]))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def num_classes(self) -> int:
        return self.catalog.num_classes

    def point(self, index: int) -> SemanticPoint:
        return SemanticPoint(self.positions[index], self.probs[index],
                             self.uncerts[index], int(self.measurement_count[index]))

    def knn(self, query: np.ndarray, k: int):
        """Exact k nearest neighbors; returns (distances, indices)."""
        return self._tree.query(np.asarray(query, dtype=np.float64), k=k)

    def copy(self) -> "SemanticPointCloud":
        other = object.__new__(SemanticPointCloud)
        other.positions = self.positions          # immutable by contract
        other.catalog = self.catalog
        other.probs = self.probs.copy()
        other.uncerts = self.uncerts.copy()
        other.measurement_count = self.measurement_count.copy()
        other._precision = self._precision.copy()
        other._weighted = self._weighted.copy()
        other._history = {i: list(h) for i, h in self._history.items()}
        other._tree = self._tree
        other.resolution = self.resolution
        return other


def init_cloud(positions: np.ndarray, catalog: ClassCatalog) -> SemanticPointCloud:
    """Fresh cloud with uniform probabilities and maximum uncertainties."""
    return SemanticPointCloud(positions, catalog)


def aggregate_arrays(probs: np.ndarray, uncerts: np.ndarray, catalog: ClassCatalog):
    """Vectorized safe/unsafe aggregation over (n, C) arrays.

    Returns (p_safe, p_unsafe, sigma) with
    sigma = min(||sigma_S||_2, ||sigma_U||_2): a point can be decidable even
    with high uncertainty on one side, provided the other side is certain.
    """
    s, u = catalog.safe_indices, catalog.unsafe_indices
    p_safe = probs[..., s].sum(axis=-1)
    p_unsafe = probs[..., u].sum(axis=-1)
    var = uncerts**2
    sigma = np.minimum(np.sqrt(var[..., s].sum(axis=-1)),
                       np.sqrt(var[..., u].sum(axis=-1)))
    return p_safe, p_unsafe, sigma


def aggregate_safety(point: SemanticPoint, catalog: ClassCatalog):
    """Scalar convenience wrapper of :func:`aggregate_arrays` for one point."""
    p_s, p_u, sigma = aggregate_arrays(point.probs, point.uncerts, catalog)
    return float(p_s), float(p_u), float(sigma)


def classify_arrays(probs: np.ndarray, uncerts: np.ndarray,
                    catalog: ClassCatalog, params: SafetyParams) -> np.ndarray:
    p_safe, p_unsafe, sigma = aggregate_arrays(probs, uncerts, catalog)
    margin = params.sigma_weight * sigma
    safe = p_safe - margin >= params.theta_safe
    unsafe = p_unsafe - margin >= params.theta_unsafe
    # Mutually exclusive under 1 - theta_safe < theta_unsafe; adding the two
    # conditions gives 1 - 2*margin >= theta_safe + theta_unsafe > 1.
    assert not np.any(safe & unsafe), "safe/unsafe conditions overlapped"
    labels = np.full(np.shape(p_safe), int(SafetyLabel.UNCLEAR), dtype=np.int8)
    labels[safe] = int(SafetyLabel.SAFE)
    labels[unsafe] = int(SafetyLabel.UNSAFE)
    return labels


def classify_point(point: SemanticPoint, catalog: ClassCatalog,
                   params: SafetyParams) -> SafetyLabel:
    label = classify_arrays(point.probs[None, :], point.uncerts[None, :],
                            catalog, params)[0]
    return SafetyLabel(int(label))


def partition_cloud(cloud: SemanticPointCloud, catalog: ClassCatalog,
                    params: SafetyParams) -> SafetyPartition:
    return SafetyPartition(classify_arrays(cloud.probs, cloud.uncerts, catalog, params))


# ---------------------------------------------------------------------------
# View measurements and fusion into the cloud
# ---------------------------------------------------------------------------

@dataclass
class ViewMeasurement:
    """One camera view: intrinsics, pose (camera-to-map), depth, and the
    per-pixel mean-softmax / std maps produced by the segmentation sensor.

    Pixels with non-positive or non-finite depth are invalid and skipped.
    """

    intrinsics: np.ndarray
    pose: Pose6D
    depth: np.ndarray
    probs: np.ndarray
    uncerts: np.ndarray

    def __post_init__(self):
        H, W = self.depth.shape
        if self.probs.shape[:2] != (H, W) or self.uncerts.shape != self.probs.shape:
            raise ValueError("probs/uncerts must be (H, W, C) matching depth")
        if self.intrinsics.shape != (3, 3):
            raise ValueError("intrinsics must be 3x3")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0.0)

    def validate(self, tol: float = SIMPLEX_TOL) -> None:
        v = self.valid
        if v.any():
            sums = self.probs[v].sum(axis=-1)
            err = np.abs(sums - 1.0).max()
            if err > tol:
                raise ValueError(f"pixel softmax sums off the simplex by {err:.3e}")
            if (self.uncerts[v] < 0).any():
                raise ValueError("negative uncertainties")


def backproject_pixel(i: float, j: float, depth: float, K: np.ndarray,
                      pose: Pose6D) -> np.ndarray:
    """Map pixel (i=column, j=row) at `depth` through the camera to 3D.

    The pixel ray is K^-1 [i, j, 1]; the camera-frame point is the ray scaled
    by depth; the pose (camera-to-map) places it in the map frame.
    """
    if not (depth > 0.0 and math.isfinite(depth)):
        raise ValueError("depth must be positive and finite")
    ray = np.linalg.solve(K, np.array([i, j, 1.0]))
    return pose.transform(depth * ray)


def backproject_pixels(cols: np.ndarray, rows: np.ndarray, depths: np.ndarray,
                       K: np.ndarray, pose: Pose6D) -> np.ndarray:
    """Vectorized backprojection of many pixels; returns (n, 3) map points."""
    ones = np.ones_like(cols, dtype=np.float64)
    pix = np.stack([cols.astype(np.float64), rows.astype(np.float64), ones])
    rays = np.linalg.solve(K, pix)  # (3, n)
    cam = rays * depths[None, :]
    return pose.transform(cam.T)


def integrate_view(cloud: SemanticPointCloud, view: ViewMeasurement,
                   merge_radius: float,
                   mode: FusionMode = FusionMode.MEASUREMENT_NORMALIZED) -> IntegrationReport:
    """Backproject every valid pixel and fuse it into its nearest cloud point.

    A pixel merges with the nearest point if that point lies within
    `merge_radius` of the backprojected pixel center; otherwise the pixel is
    discarded. Equidistant nearest neighbors resolve to the lowest point
    index. Positions never change; measurement counts increment on merged
    points.
    """
    view.validate()
    valid = view.valid
    n_valid = int(valid.sum())
    n_pixels = view.depth.size
    if n_valid == 0:
        return IntegrationReport(0, n_pixels)

    rows, cols = np.nonzero(valid)
    pts = backproject_pixels(cols, rows, view.depth[rows, cols],
                             view.intrinsics, view.pose)
    k = min(2, len(cloud))
    dist, idx = cloud._tree.query(pts, k=k)
    if k == 2:
        tie = dist[:, 0] == dist[:, 1]
        nearest = idx[:, 0].copy()
        nearest[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
        ndist = dist[:, 0]
    else:
        nearest, ndist = np.atleast_1d(idx), np.atleast_1d(dist)

    merged_mask = ndist <= merge_radius
    n_merged = int(merged_mask.sum())
    if n_merged == 0:
        return IntegrationReport(0, n_pixels)

    target = nearest[merged_mask]
    p_meas = view.probs[rows[merged_mask], cols[merged_mask]].astype(np.float64)
    s_meas = np.maximum(view.uncerts[rows[merged_mask], cols[merged_mask]].astype(np.float64),
                        SIGMA_FLOOR)

    if mode is FusionMode.MEASUREMENT_NORMALIZED:
        lam = s_meas**-2
        np.add.at(cloud._precision, target, lam)
        np.add.at(cloud._weighted, target, lam * p_meas)
        touched = np.unique(target)
        p, s = fused_from_sufficient_stats(cloud._precision[touched],
                                           cloud._weighted[touched])
        cloud.probs[touched] = p
        cloud.uncerts[touched] = s
    elif mode is FusionMode.LITERAL_PAPER:
        C = cloud.num_classes
        prior = (np.full(C, 1.0 / C), np.full(C, INIT_SIGMA))
        for row, t in enumerate(target):
            t = int(t)
            hist = cloud._history.setdefault(t, [prior])
            hist.append((p_meas[row], s_meas[row]))
        for t in np.unique(target):
            p, s = fuse_class_measurements(cloud._history[int(t)], mode)
            cloud.probs[t] = p
            cloud.uncerts[t] = s
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")

    cloud.measurement_count += np.bincount(target, minlength=len(cloud))
    return IntegrationReport(n_merged, n_pixels - n_merged)
