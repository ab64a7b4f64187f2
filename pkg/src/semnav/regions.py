"""Clustering of unclear points into regions.

Unclear points are grouped by a two-stage process: DBSCAN over all unclear
points yields coarse regions; inside each coarse region, points are
re-grouped by their most likely class (unmeasured points form a special
"no prediction" group) and DBSCAN runs again per group. Noise points at
either stage become singleton regions so that the final region set exactly
partitions the unclear points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .semantic_cloud import SafetyLabel, SafetyPartition, SemanticPointCloud

NO_PREDICTION = -1  # dominant-class id of points that were never measured


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("eps must be > 0")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass
class UnclearRegion:
    id: int
    point_indices: np.ndarray
    dominant_class: int  # class id, or NO_PREDICTION

    def __post_init__(self):
        if len(self.point_indices) == 0:
            raise ValueError("region must be non-empty")

    def __len__(self) -> int:
        return len(self.point_indices)


@dataclass
class RegionSet:
    """Regions plus the inverse map; partitions the unclear points exactly."""

    regions: list
    point_to_region: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.point_to_region:
            for r in self.regions:
                for i in r.point_indices:
                    self.point_to_region[int(i)] = r.id

    def __len__(self) -> int:
        return len(self.regions)

    def region_of(self, point_index: int):
        return self.point_to_region.get(int(point_index))

    def ids_for_points(self, point_indices) -> set:
        out = set()
        for i in np.asarray(point_indices).ravel():
            rid = self.point_to_region.get(int(i))
            if rid is not None:
                out.add(rid)
        return out

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["point_index", "region_id", "dominant_class"])
            for r in self.regions:
                for i in sorted(int(x) for x in r.point_indices):
                    writer.writerow([i, r.id, r.dominant_class])


def dbscan(positions: np.ndarray, params: DbscanParams):
    """Density clustering with the textbook core/border/noise semantics.

    A point is a core point when at least `min_pts` points (itself included)
    lie within `eps`; clusters are the maximal sets connected through core
    points; border points join the cluster of the core point that first
    reaches them in index order, so output is deterministic for a fixed
    point ordering.

    Returns (clusters, noise): a list of index arrays and an index array.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    if n == 0:
        return [], np.array([], dtype=np.intp)
    tree = cKDTree(positions)
    neighbors = tree.query_ball_point(positions, r=params.eps)
    is_core = np.array([len(nb) >= params.min_pts for nb in neighbors])

    label = np.full(n, -1, dtype=np.int64)  # -1 = unassigned / noise
    cluster_id = 0
    for start in range(n):
        if label[start] != -1 or not is_core[start]:
            continue
        # grow a new cluster from this core point
        label[start] = cluster_id
        frontier = [start]
        while frontier:
            point = frontier.pop()
            for nb in sorted(neighbors[point]):
                if label[nb] == -1:
                    label[nb] = cluster_id
                    if is_core[nb]:
                        frontier.append(nb)
        cluster_id += 1

    clusters = [np.flatnonzero(label == c) for c in range(cluster_id)]
    noise = np.flatnonzero(label == -1)
    return clusters, noise


def two_stage_cluster(cloud: SemanticPointCloud, partition: SafetyPartition,
                      params: DbscanParams,
                      stage2_params: DbscanParams | None = None) -> RegionSet:
    """Build the region set over the cloud's unclear points.

    Stage 1 clusters all unclear points spatially. Stage 2 splits each
    coarse cluster by argmax class (ties to the lowest class index;
    unmeasured points get NO_PREDICTION) and re-runs DBSCAN per group.
    Noise at either stage becomes singleton regions.
    """
    if stage2_params is None:
        stage2_params = params
    unclear = partition.indices(SafetyLabel.UNCLEAR)
    regions: list[UnclearRegion] = []
    if len(unclear) == 0:
        return RegionSet(regions)

    argmax = cloud.probs.argmax(axis=1)  # np.argmax takes the lowest index on ties
    dominant = np.where(cloud.measurement_count > 0, argmax, NO_PREDICTION)

    def add_region(member_indices: np.ndarray, dom: int):
        regions.append(UnclearRegion(len(regions), np.sort(member_indices), dom))

    coarse, coarse_noise = dbscan(cloud.positions[unclear], params)
    for cluster in coarse:
        members = unclear[cluster]
        for dom in sorted(set(int(d) for d in dominant[members])):
            group = members[dominant[members] == dom]
            subclusters, subnoise = dbscan(cloud.positions[group], stage2_params)
            for sub in subclusters:
                add_region(group[sub], dom)
            for i in group[subnoise]:
                add_region(np.array([i]), dom)
    for i in unclear[coarse_noise]:
        add_region(np.array([i]), int(dominant[i]))
    return RegionSet(regions)


def regions_traversed(path, region_set: RegionSet) -> set:
    """Region ids whose point sets intersect any node's support set."""
    ids: set[int] = set()
    for node in path:
        ids |= region_set.ids_for_points(node.support)
    return ids
