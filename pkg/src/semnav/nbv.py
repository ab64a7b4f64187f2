"""Next-best-view selection over the hypothesis graph.

Candidate camera poses are scored by a weighted sum of four [0, 1] terms:
closeness to the visible path vertices, viewing-angle diversity relative to
the start view, the number of visible vertices, and the mean information
gain of the visible vertices. Visibility comes from a point-splatting
z-buffer render of the cloud: every point is drawn as a screen-aligned
square whose world side is half the cloud resolution, projected at the
point's depth; the nearest splat wins each pixel.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, Pose6D, camera_pose_from_robot
from .hypothesis import GrowthParams, HypothesisGraph
from .kinematics import TraversabilityParams, extend, make_node, primitive_library
from .semantic_cloud import SafetyLabel, SafetyPartition, SemanticPointCloud


@dataclass(frozen=True)
class NbvWeights:
    beta_distance: float = 0.4
    beta_angle: float = 0.05
    beta_visible: float = 0.25
    beta_gain: float = 0.3
    alpha_visibility: float = 0.5
    alpha_uncertainty: float = 0.5

    def __post_init__(self):
        betas = (self.beta_distance, self.beta_angle, self.beta_visible, self.beta_gain)
        alphas = (self.alpha_visibility, self.alpha_uncertainty)
        if min(betas) < 0 or min(alphas) < 0:
            raise ValueError("weights must be >= 0")
        if abs(sum(betas) - 1.0) > 1e-9:
            raise ValueError("beta weights must sum to 1")
        if abs(sum(alphas) - 1.0) > 1e-9:
            raise ValueError("alpha weights must sum to 1")

    def geometry_only(self) -> "NbvWeights":
        s = self.beta_distance + self.beta_angle + self.beta_visible
        if s <= 0:
            raise ValueError("geometry-only variant needs a nonzero geometry weight")
        return NbvWeights(self.beta_distance / s, self.beta_angle / s,
                          self.beta_visible / s, 0.0,
                          self.alpha_visibility, self.alpha_uncertainty)

    def uncertainty_only(self) -> "NbvWeights":
        return NbvWeights(0.0, 0.0, 0.0, 1.0,
                          self.alpha_visibility, self.alpha_uncertainty)


class NbvSelector(enum.Enum):
    FULL = "full"
    RANDOM = "random"
    GEOMETRY_ONLY = "geometry"
    UNCERTAINTY_ONLY = "uncertainty"


@dataclass
class VisibilityImage:
    """Result of one splat render: per-pixel owning point and coverage."""

    point_index: np.ndarray   # (H, W) int64, -1 where no splat lands
    depth: np.ndarray         # (H, W) float64, inf where empty
    coverage: np.ndarray      # (n_points,) pixels won by each point

    @property
    def covered_pixels(self) -> int:
        return int((self.point_index >= 0).sum())


@dataclass
class NbvCandidate:
    pose: Pose6D                      # robot pose of the candidate
    camera: Pose6D                    # camera pose used for rendering
    visible_vertices: list = field(default_factory=list)
    term_distance: float = 0.0
    term_angle: float = 0.0
    term_visible: float = 0.0
    term_gain: float = 0.0
    reward: float = 0.0


def splat_pixel_bounds(u: np.ndarray, half: np.ndarray, limit: int):
    """Inclusive integer pixel range covered by [u-half, u+half], clipped."""
    lo = np.ceil(u - half).astype(np.int64)
    hi = np.floor(u + half).astype(np.int64)
    return np.clip(lo, 0, limit - 1), np.clip(hi, -1, limit - 1), (lo <= hi) & (hi >= 0) & (lo <= limit - 1)


def render_visibility(cloud: SemanticPointCloud, camera: Pose6D, K: np.ndarray,
                      image_size, splat_side: float | None = None) -> VisibilityImage:
    """Z-buffer render of the cloud from a camera pose.

    `image_size` is (height, width). Points at non-positive camera depth are
    skipped. Each point covers the pixels whose integer centers fall inside
    its projected square (closed interval); depth conflicts resolve to the
    nearest point, exact ties to the lowest point index.
    """
    H, W = image_size
    if splat_side is None:
        splat_side = cloud.resolution / 2.0
    pts_cam = camera.transform_inverse(cloud.positions)
    z = pts_cam[:, 2]

    index_map = np.full((H, W), -1, dtype=np.int64)
    depth_map = np.full((H, W), np.inf)
    front = z > 0.0
    if not front.any():
        return VisibilityImage(index_map, depth_map,
                               np.zeros(len(cloud), dtype=np.int64))

    fx, fy = K[0, 0], K[1, 1]
    cx, cy = K[0, 2], K[1, 2]
    ids = np.flatnonzero(front)
    zf = z[front]
    u = fx * pts_cam[front, 0] / zf + cx
    v = fy * pts_cam[front, 1] / zf + cy
    half_u = (splat_side / 2.0) * fx / zf
    half_v = (splat_side / 2.0) * fy / zf

    u_lo, u_hi, u_ok = splat_pixel_bounds(u, half_u, W)
    v_lo, v_hi, v_ok = splat_pixel_bounds(v, half_v, H)
    ok = u_ok & v_ok
    if not ok.any():
        return VisibilityImage(index_map, depth_map,
                               np.zeros(len(cloud), dtype=np.int64))

    # Expand every splat into its (pixel, depth, id) triples, then keep the
    # per-pixel minimum of (depth, id): nearest wins, exact depth ties go to
    # the lowest point index.
    wu = (u_hi - u_lo + 1)[ok]
    wv = (v_hi - v_lo + 1)[ok]
    counts = wu * wv
    total = int(counts.sum())
    rep = np.repeat(np.arange(len(counts)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    uu = u_lo[ok][rep] + offsets % wu[rep]
    vv = v_lo[ok][rep] + offsets // wu[rep]
    lin = vv * W + uu
    depth_rep = zf[ok][rep]
    id_rep = ids[ok][rep]
    order = np.lexsort((id_rep, depth_rep, lin))
    lin_sorted = lin[order]
    first = np.ones(total, dtype=bool)
    first[1:] = lin_sorted[1:] != lin_sorted[:-1]
    winners = order[first]
    index_map.ravel()[lin[winners]] = id_rep[winners]
    depth_map.ravel()[lin[winners]] = depth_rep[winners]

    coverage = np.bincount(index_map[index_map >= 0].ravel(), minlength=len(cloud))
    return VisibilityImage(index_map, depth_map, coverage.astype(np.int64))


def vertex_visibility(node, visibility: VisibilityImage, pixel_threshold: int):
    """Pixel coverage of a node's support set and the strict visibility flag."""
    pixels = int(visibility.coverage[np.atleast_1d(node.support)].sum())
    return pixels, pixels > pixel_threshold


def vertex_uncertainty(node, cloud: SemanticPointCloud) -> float:
    """Mean over the support set of the per-point class-summed uncertainty."""
    sup = np.atleast_1d(node.support)
    return float(cloud.uncerts[sup].sum(axis=1).mean())


def _minmax(values: np.ndarray) -> np.ndarray:
    """Min-max onto [0, 1]; a degenerate (constant) input maps to all ones."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi - lo <= 0.0:
        return np.ones_like(values)
    return (values - lo) / (hi - lo)


def info_gain(i_norm: float, sigma_norm: float, weights: NbvWeights) -> float:
    """Per-vertex expected uncertainty reduction from normalized inputs."""
    return weights.alpha_visibility * i_norm + weights.alpha_uncertainty * sigma_norm


def generate_candidates(cloud: SemanticPointCloud, partition: SafetyPartition,
                        start: Pose6D, radius: float, count: int, seed: int,
                        goal_position: np.ndarray,
                        trav: TraversabilityParams = TraversabilityParams(),
                        growth: GrowthParams = GrowthParams(),
                        budget: int = 150,
                        fixed_poses: list | None = None,
                        start_clearance: float = 0.6) -> list:
    """Viable view poses the robot can actually stand on.

    Grows a small RRT restricted to Safe points within `radius` of the start
    (everything unclear counts as unsafe here), then returns a deterministic
    subsample of `count` vertices, each re-oriented toward the goal. When
    `fixed_poses` is given they are returned unchanged (heuristic candidate
    mode). An empty list means the start has no safe ground to move on.

    Points within `start_clearance` of the start are exempt from the
    safe-support requirement: the robot already stands there, and a
    forward-mounted camera can never observe its own footprint.
    """
    if fixed_poses is not None:
        return list(fixed_poses)

    root = make_node(cloud, start.position, start.heading, 0.0, trav)
    if root is None:
        return []
    safe_mask = partition.labels == int(SafetyLabel.SAFE)
    dist_to_start = np.linalg.norm(cloud.positions - start.position, axis=1)
    standable = safe_mask | (dist_to_start <= start_clearance)
    allowed = np.flatnonzero(safe_mask & (dist_to_start <= radius))
    if len(allowed) == 0:
        return []

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    nodes = [root]
    positions = [root.pose.position]
    yaws = [root.pose.yaw]
    for _ in range(budget):
        target = cloud.positions[allowed[rng.integers(len(allowed))]]
        pos = np.array(positions)
        delta = target - pos
        bearing = np.arctan2(delta[:, 1], delta[:, 0])
        hdiff = np.abs(np.mod(bearing - np.array(yaws) + np.pi, 2 * np.pi) - np.pi)
        metric = np.linalg.norm(delta, axis=1) + growth.heading_weight * hdiff
        near_node = nodes[int(np.argmin(metric))]

        prims = primitive_library(near_node.kappa, growth.kappa_max, growth.step_length)
        best, best_d = None, math.inf
        for prim in prims:
            child = extend(near_node, prim, cloud, trav)
            if child is None:
                continue
            if not standable[child.support].all():
                continue
            if np.linalg.norm(child.pose.position - start.position) > radius:
                continue
            d = np.linalg.norm(child.pose.position - target)
            if d < best_d:
                best, best_d = child, d
        if best is not None:
            nodes.append(best)
            positions.append(best.pose.position)
            yaws.append(best.pose.yaw)

    picks = np.unique(np.round(np.linspace(0, len(nodes) - 1,
                                           min(count, len(nodes)))).astype(int))
    out = []
    for i in picks:
        node = nodes[int(i)]
        to_goal = np.asarray(goal_position) - node.pose.position
        yaw = math.atan2(to_goal[1], to_goal[0])
        heading = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        oriented = make_node(cloud, node.pose.position, heading, 0.0, trav)
        out.append(oriented.pose if oriented is not None else node.pose)
    return out


def evaluate_candidates(candidates: list, graph: HypothesisGraph,
                        nbv_vertex_ids: list, cloud: SemanticPointCloud,
                        start: Pose6D, camera_model: CameraModel,
                        weights: NbvWeights, pixel_threshold: int,
                        camera_height: float, camera_pitch: float) -> list:
    """Score every candidate pose; returns a list of NbvCandidate.

    All four reward terms are min-max normalized over the candidate set of
    the current iteration (degenerate spans normalize to ones); candidates
    that see no vertex receive reward zero.
    """
    if not candidates:
        return []
    K = camera_model.intrinsics
    size = (camera_model.height, camera_model.width)
    evals = [NbvCandidate(pose=p,
                          camera=camera_pose_from_robot(p, camera_height, camera_pitch))
             for p in candidates]
    if not nbv_vertex_ids:
        return evals

    vert_nodes = [graph.nodes[v] for v in nbv_vertex_ids]
    vert_pos = np.array([n.pose.position for n in vert_nodes])
    sigma_v = np.array([vertex_uncertainty(n, cloud) for n in vert_nodes])

    pixel_counts = np.zeros((len(evals), len(vert_nodes)))
    visible_mask = np.zeros((len(evals), len(vert_nodes)), dtype=bool)
    for ci, cand in enumerate(evals):
        vis = render_visibility(cloud, cand.camera, K, size)
        for vi, node in enumerate(vert_nodes):
            pixels, visible = vertex_visibility(node, vis, pixel_threshold)
            pixel_counts[ci, vi] = pixels
            visible_mask[ci, vi] = visible
            if visible:
                cand.visible_vertices.append(nbv_vertex_ids[vi])

    i_norm = _minmax(pixel_counts)          # over (candidate, vertex) pairs
    sigma_norm = _minmax(sigma_v)           # constant across candidates
    gain = (weights.alpha_visibility * i_norm
            + weights.alpha_uncertainty * sigma_norm[None, :])

    any_visible = visible_mask.any(axis=1)
    if not any_visible.any():
        return evals

    start_pos = start.position
    raw_dist = np.zeros(len(evals))
    raw_angle = np.zeros(len(evals))
    raw_nvis = visible_mask.sum(axis=1).astype(np.float64)
    raw_gain = np.zeros(len(evals))
    for ci, cand in enumerate(evals):
        mask = visible_mask[ci]
        if not mask.any():
            continue
        pv = vert_pos[mask]
        cp = cand.pose.position
        raw_dist[ci] = np.linalg.norm(pv - cp, axis=1).mean()
        a = pv - start_pos
        b = pv - cp
        denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        denom = np.where(denom < 1e-12, 1e-12, denom)
        cosang = np.clip((a * b).sum(axis=1) / denom, -1.0, 1.0)
        raw_angle[ci] = (-cosang).mean()
        raw_gain[ci] = gain[ci, mask].mean()

    act = np.flatnonzero(any_visible)
    term_d = np.zeros(len(evals))
    term_a = np.zeros(len(evals))
    term_n = np.zeros(len(evals))
    term_d[act] = 1.0 - _minmax(raw_dist[act])
    term_a[act] = _minmax(raw_angle[act])
    term_n[act] = _minmax(raw_nvis[act])

    for ci, cand in enumerate(evals):
        if not any_visible[ci]:
            cand.reward = 0.0
            continue
        cand.term_distance = float(term_d[ci])
        cand.term_angle = float(term_a[ci])
        cand.term_visible = float(term_n[ci])
        cand.term_gain = float(raw_gain[ci])
        cand.reward = (weights.beta_distance * cand.term_distance
                       + weights.beta_angle * cand.term_angle
                       + weights.beta_visible * cand.term_visible
                       + weights.beta_gain * cand.term_gain)
    return evals


def candidate_reward(candidate: NbvCandidate, weights: NbvWeights) -> float:
    """Weighted sum of the four already-normalized terms of one candidate."""
    return (weights.beta_distance * candidate.term_distance
            + weights.beta_angle * candidate.term_angle
            + weights.beta_visible * candidate.term_visible
            + weights.beta_gain * candidate.term_gain)


def check_return_corridor(cloud: SemanticPointCloud, partition: SafetyPartition,
                          start: Pose6D, candidate: Pose6D,
                          corridor_width: float) -> bool:
    """Safe-only straight-line corridor test used for fixed candidate lists.

    Every cloud point whose xy distance to the start-candidate segment is at
    most half the corridor width must be Safe.
    """
    a = start.position[:2]
    b = candidate.position[:2]
    ab = b - a
    length2 = float(ab @ ab)
    pts = cloud.positions[:, :2]
    if length2 < 1e-12:
        t = np.zeros(len(pts))
    else:
        t = np.clip((pts - a) @ ab / length2, 0.0, 1.0)
    nearest = a + t[:, None] * ab
    d = np.linalg.norm(pts - nearest, axis=1)
    inside = d <= corridor_width / 2.0
    return bool((partition.labels[inside] == int(SafetyLabel.SAFE)).all())


def select_nbv(evals: list, selector: NbvSelector = NbvSelector.FULL,
               rng: np.random.Generator | None = None,
               qualify=None):
    """Pick the next view among scored candidates.

    `qualify` is an optional per-candidate predicate implementing the
    safe-return check (candidates from the safe RRT qualify by
    construction). Ties break to the lowest candidate index; returns None
    when nothing qualifies.
    """
    pool = [(i, c) for i, c in enumerate(evals)
            if qualify is None or qualify(c)]
    if not pool:
        return None
    if selector is NbvSelector.RANDOM:
        if rng is None:
            raise ValueError("random selection needs an rng")
        return pool[int(rng.integers(len(pool)))][1]
    best = max(pool, key=lambda item: (item[1].reward, -item[0]))
    return best[1]


def export_diagnostics_csv(evals: list, selected: NbvCandidate | None, path) -> None:
    """Per-iteration candidate diagnostics CSV."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["candidate", "x", "y", "z", "yaw", "term_distance",
                         "term_angle", "n_visible", "term_gain", "reward",
                         "selected"])
        for i, c in enumerate(evals):
            x, y, z = c.pose.position
            writer.writerow([i, f"{x:.9g}", f"{y:.9g}", f"{z:.9g}",
                             f"{c.pose.yaw:.9g}", f"{c.term_distance:.9g}",
                             f"{c.term_angle:.9g}", len(c.visible_vertices),
                             f"{c.term_gain:.9g}", f"{c.reward:.9g}",
                             int(c is selected)])
