"""Multi-hypothesis path graph over the semantic cloud.

A single RRT grows from the start pose, sampling cloud points outside a
forbidden set (initially the unsafe points). Each time a path to the goal
region is found, the unclear regions it traverses (minus those hosting the
start/goal neighborhoods) become removal candidates; the largest is added to
the forbidden set, the tree vertices standing on it are retired, and growth
continues, reconnecting to orphaned subtrees where a steering segment can be
solved. Every discovered vertex and arc stays in the returned graph, so path
costs can keep evolving as new views arrive.

Vertex costs follow the three-case rule: zero when the whole support set is
safe, infinite when the unsafe support count reaches a threshold, otherwise
the mean clamped safety margin of the support points.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose6D
from .kinematics import (MotionPrimitive, TrajectoryNode, TraversabilityParams,
                         extend, integrate_primitive, make_node,
                         primitive_library, solve_connection)
from .regions import RegionSet, regions_traversed
from .semantic_cloud import (SafetyLabel, SafetyParams, SafetyPartition,
                             SemanticPointCloud, aggregate_arrays)


@dataclass(frozen=True)
class GoalRegion:
    center: Pose6D
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("goal radius must be > 0")

    def contains(self, position: np.ndarray) -> bool:
        return bool(np.linalg.norm(np.asarray(position) - self.center.position)
                    <= self.radius)


@dataclass(frozen=True)
class CostParams:
    unsafe_count_threshold: int = 4      # support points in M_unsafe before cost = inf
    start_relax_radius: float = 1.0      # near-start zero-cost relaxation extent
    relax_mean_threshold: float = 0.05
    footprint_radius: float = 0.5        # ground under the robot, unobservable

    def __post_init__(self):
        if self.unsafe_count_threshold < 1:
            raise ValueError("unsafe_count_threshold must be >= 1")


@dataclass(frozen=True)
class GrowthParams:
    goal_bias: float = 0.15
    kappa_max: float = 1.0
    step_length: float = 0.5
    heading_weight: float = 0.5          # meters of penalty per radian of heading error
    max_restarts: int = 3
    reconnect_radius: float = 1.2
    reconnect_attempts: int = 2


@dataclass
class CandidatePath:
    vertices: tuple
    cost: float

    def __len__(self) -> int:
        return len(self.vertices)


class PathStatus(enum.Enum):
    CONFIRMED_SAFE = "confirmed-safe"
    CONFIRMED_UNSAFE = "confirmed-unsafe"
    UNDECIDED = "undecided"


class HypothesisGraph:
    """Directed graph of trajectory nodes with per-vertex semantic costs."""

    def __init__(self, root_node: TrajectoryNode):
        self.nodes: list[TrajectoryNode] = [root_node]
        self.arcs: dict[int, list] = {0: []}
        self._arc_keys: set = set()
        self.root: int = 0
        self.goal_vertices: list[int] = []
        self.costs = np.zeros(1)
        self.paths_found: list[tuple] = []   # construction-time tree paths
        self.removed_regions: list[int] = []  # region ids dropped during growth

    def __len__(self) -> int:
        return len(self.nodes)

    def add_vertex(self, node: TrajectoryNode) -> int:
        vid = len(self.nodes)
        self.nodes.append(node)
        self.arcs[vid] = []
        return vid

    def add_arc(self, u: int, v: int, primitive: MotionPrimitive) -> None:
        if (u, v) not in self._arc_keys:
            self._arc_keys.add((u, v))
            self.arcs[u].append((v, primitive))

    def num_arcs(self) -> int:
        return len(self._arc_keys)

    def support_matrix(self) -> np.ndarray:
        return np.stack([n.support for n in self.nodes])

    def positions(self) -> np.ndarray:
        return np.stack([n.pose.position for n in self.nodes])

    def recost(self, cloud: SemanticPointCloud, partition: SafetyPartition,
               safety: SafetyParams, cost_params: CostParams) -> np.ndarray:
        self.costs = compute_costs(self, cloud, partition, safety, cost_params)
        return self.costs

    def export_edge_list(self, path) -> None:
        """Plain-text dump: vertex lines (id, pose, cost), then arc lines."""
        with open(path, "w") as f:
            for vid, node in enumerate(self.nodes):
                x, y, z = node.pose.position
                cost = self.costs[vid] if vid < len(self.costs) else math.nan
                f.write(f"vertex {vid} {x:.9g} {y:.9g} {z:.9g} "
                        f"{node.pose.roll:.9g} {node.pose.pitch:.9g} "
                        f"{node.pose.yaw:.9g} {cost:.9g}\n")
            for u in sorted(self.arcs):
                for v, _ in self.arcs[u]:
                    f.write(f"arc {u} {v}\n")


def node_cost(node: TrajectoryNode, partition: SafetyPartition,
              cloud: SemanticPointCloud, params: SafetyParams,
              cost_params: CostParams,
              root_position: np.ndarray | None = None) -> float:
    """Semantic cost of one node; see the module docstring for the rule.

    When `root_position` is given, nodes within the relax radius of it get
    zero cost as long as no support point is unsafe and the mean margin of
    the support points outside the robot's start footprint stays below the
    relax threshold (the ground the robot stands on cannot be observed by
    its own forward camera, so it never blocks confirmation; unsafe labels
    there still count toward the infinite-cost case).
    """
    sup = np.atleast_1d(node.support)
    if len(sup) == 0:
        raise ValueError("node has an empty support set")
    labels = partition.labels[sup]
    unsafe_count = int(np.count_nonzero(labels == int(SafetyLabel.UNSAFE)))
    if unsafe_count >= cost_params.unsafe_count_threshold:
        return math.inf
    if bool(np.all(labels == int(SafetyLabel.SAFE))):
        return 0.0
    p_safe, _, sigma = aggregate_arrays(cloud.probs[sup], cloud.uncerts[sup],
                                        cloud.catalog)
    margins = np.clip(params.theta_safe - p_safe + params.sigma_weight * sigma,
                      0.0, 1.0)
    mean_margin = float(margins.mean())
    if (root_position is not None and unsafe_count == 0
            and np.linalg.norm(node.pose.position - root_position)
            <= cost_params.start_relax_radius):
        outside = (np.linalg.norm(cloud.positions[sup] - root_position, axis=1)
                   > cost_params.footprint_radius)
        relax_margin = float(margins[outside].mean()) if outside.any() else 0.0
        if relax_margin < cost_params.relax_mean_threshold:
            return 0.0
    return mean_margin


def compute_costs(graph: HypothesisGraph, cloud: SemanticPointCloud,
                  partition: SafetyPartition, safety: SafetyParams,
                  cost_params: CostParams) -> np.ndarray:
    """Vectorized node_cost over every vertex of the graph."""
    sup = graph.support_matrix()                      # (V, K)
    labels = partition.labels[sup]
    unsafe_count = (labels == int(SafetyLabel.UNSAFE)).sum(axis=1)
    all_safe = (labels == int(SafetyLabel.SAFE)).all(axis=1)

    p_safe, _, sigma = aggregate_arrays(cloud.probs[sup], cloud.uncerts[sup],
                                        cloud.catalog)
    margins = np.clip(safety.theta_safe - p_safe + safety.sigma_weight * sigma,
                      0.0, 1.0)
    mean_margin = margins.mean(axis=1)

    root_pos = graph.nodes[graph.root].pose.position
    dist_to_root = np.linalg.norm(graph.positions() - root_pos, axis=1)
    outside_footprint = (np.linalg.norm(cloud.positions[sup] - root_pos, axis=2)
                         > cost_params.footprint_radius)
    n_outside = outside_footprint.sum(axis=1)
    relax_margin = np.where(
        n_outside > 0,
        (margins * outside_footprint).sum(axis=1) / np.maximum(n_outside, 1),
        0.0)
    relaxed = ((dist_to_root <= cost_params.start_relax_radius)
               & (unsafe_count == 0)
               & (relax_margin < cost_params.relax_mean_threshold))

    costs = mean_margin.astype(np.float64)
    costs[all_safe | relaxed] = 0.0
    costs[unsafe_count >= cost_params.unsafe_count_threshold] = math.inf
    return costs


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------

_FREE = 0      # root-connected and expandable
_ORPHAN = 1    # alive but cut off by a region removal; reconnect target
_RETIRED = 2   # stood on a removed region; out of the running tree
_ARCHIVED = 3  # belongs to a previous restart's tree


class _Rrt:
    """Bookkeeping of the currently growing tree inside the shared graph."""

    def __init__(self, graph: HypothesisGraph, kappa_max: float):
        self.graph = graph
        self.parent = {graph.root: -1}
        self.status = {graph.root: _FREE}
        self.kappa_max = kappa_max
        self._endpoint_cache: dict = {}

    def free_ids(self):
        return [v for v, s in self.status.items() if s == _FREE]

    def orphan_ids(self):
        return [v for v, s in self.status.items() if s == _ORPHAN]

    def endpoints(self, node: TrajectoryNode, primitives):
        """Local planar endpoints of a primitive batch, cached by coefficients."""
        out = []
        for prim in primitives:
            key = (prim.a, prim.b, prim.c, prim.d, prim.length, prim.reverse)
            res = self._endpoint_cache.get(key)
            if res is None:
                res = integrate_primitive((0.0, 0.0, 0.0, prim.a), prim)
                self._endpoint_cache[key] = res
            out.append(res)
        return out

    def chain_to_root(self, vid: int):
        path = [vid]
        while self.parent[path[-1]] != -1:
            path.append(self.parent[path[-1]])
        return tuple(reversed(path))

    def refresh_connectivity(self) -> None:
        """Re-derive FREE/ORPHAN after retirements, by BFS from the root."""
        children: dict[int, list] = {}
        for v, p in self.parent.items():
            if p != -1:
                children.setdefault(p, []).append(v)
        reached = set()
        frontier = [self.graph.root]
        while frontier:
            v = frontier.pop()
            if v in reached or self.status.get(v) == _RETIRED:
                continue
            reached.add(v)
            frontier.extend(children.get(v, []))
        for v, s in self.status.items():
            if s in (_FREE, _ORPHAN):
                self.status[v] = _FREE if v in reached else _ORPHAN


def grow_hypothesis_graph(cloud: SemanticPointCloud, partition: SafetyPartition,
                          region_set: RegionSet, start: Pose6D, goal: GoalRegion,
                          budget: int, seed: int,
                          trav: TraversabilityParams = TraversabilityParams(),
                          growth: GrowthParams = GrowthParams()) -> HypothesisGraph:
    """Build the multi-hypothesis graph; deterministic for fixed inputs+seed.

    Raises ValueError when the start pose cannot be attached with tau > 0.
    A run that never reaches the goal region returns the graph it has (the
    caller treats a goal-less graph as planning failure, not as an error).
    """
    attach = make_node(cloud, start.position, start.heading, 0.0, trav)
    if attach is None:
        raise ValueError("start pose cannot be attached to the surface with tau > 0")
    graph = HypothesisGraph(attach)

    labels = partition.labels
    unsafe_mask = labels == int(SafetyLabel.UNSAFE)

    # Region id per cloud point (-1 outside any unclear region).
    region_of_point = np.full(len(cloud), -1, dtype=np.int64)
    for r in region_set.regions:
        region_of_point[r.point_indices] = r.id
    region_sizes = {r.id: len(r) for r in region_set.regions}

    # Regions hosting the start/goal neighborhoods are never removable.
    k = min(trav.support_size, len(cloud))
    goal_attach = make_node(cloud, goal.center.position, goal.center.heading, 0.0, trav)
    goal_pos = goal_attach.pose.position if goal_attach else goal.center.position
    _, start_knn = cloud.knn(start.position, k)
    _, goal_knn = cloud.knn(goal_pos, k)
    protected = set(region_of_point[np.atleast_1d(start_knn)]) \
        | set(region_of_point[np.atleast_1d(goal_knn)])
    protected.discard(-1)

    for restart in range(growth.max_restarts + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, restart]))
        terminal = _grow_one_tree(graph, cloud, unsafe_mask, region_of_point,
                                  region_sizes, protected, goal, goal_pos,
                                  budget, rng, trav, growth)
        if not terminal:
            break
    return graph


def _grow_one_tree(graph, cloud, unsafe_mask, region_of_point, region_sizes,
                   protected, goal, goal_pos, budget, rng, trav, growth) -> bool:
    """One RRT pass with region removal; True if it ended on a terminal path
    (one that traverses only protected regions)."""
    tree = _Rrt(graph, growth.kappa_max)
    if graph.paths_found:
        # a restart: the prior tree's vertices leave the running structures
        for vid in range(1, len(graph.nodes)):
            if vid not in tree.status:
                tree.status[vid] = _ARCHIVED

    forbidden = unsafe_mask.copy()
    allowed = np.flatnonzero(~forbidden)
    bias_target = _nearest_allowed(cloud, goal_pos, allowed)

    free_pos = {graph.root: graph.nodes[graph.root].pose.position}
    free_yaw = {graph.root: graph.nodes[graph.root].pose.yaw}

    for _ in range(budget):
        if len(allowed) == 0:
            break
        if bias_target is not None and rng.random() < growth.goal_bias:
            target = cloud.positions[bias_target]
        else:
            target = cloud.positions[allowed[rng.integers(len(allowed))]]

        ids = list(free_pos.keys())
        pos = np.array([free_pos[i] for i in ids])
        yaw = np.array([free_yaw[i] for i in ids])
        delta = target - pos
        bearing = np.arctan2(delta[:, 1], delta[:, 0])
        hdiff = np.abs(np.mod(bearing - yaw + np.pi, 2.0 * np.pi) - np.pi)
        metric = np.linalg.norm(delta, axis=1) + growth.heading_weight * hdiff
        near_id = ids[int(np.argmin(metric))]
        near = graph.nodes[near_id]

        prims = primitive_library(near.kappa, growth.kappa_max, growth.step_length)
        ends = tree.endpoints(near, prims)
        end_world = [near.pose.transform(np.array([ex, ey, 0.0]))
                     for (ex, ey, _), _ in ends]
        order = np.argsort([np.linalg.norm(w - target) for w in end_world])

        child_id = None
        for pi in order:
            prim = prims[pi]
            child = extend(near, prim, cloud, trav)
            if child is None or forbidden[child.support].any():
                continue
            child_id = graph.add_vertex(child)
            graph.add_arc(near_id, child_id, prim)
            tree.parent[child_id] = near_id
            tree.status[child_id] = _FREE
            free_pos[child_id] = child.pose.position
            free_yaw[child_id] = child.pose.yaw
            break
        if child_id is None:
            continue

        _try_reconnect(graph, tree, child_id, growth, free_pos, free_yaw)

        if goal.contains(graph.nodes[child_id].pose.position):
            graph.goal_vertices.append(child_id)
            path_ids = tree.chain_to_root(child_id)
            graph.paths_found.append(path_ids)
            traversed = regions_traversed([graph.nodes[i] for i in path_ids],
                                          _RegionLookup(region_of_point))
            removable = traversed - protected
            if not removable:
                return True
            largest = max(removable, key=lambda rid: (region_sizes[rid], -rid))
            graph.removed_regions.append(largest)
            region_pts = np.flatnonzero(region_of_point == largest)
            forbidden[region_pts] = True
            allowed = np.flatnonzero(~forbidden)
            bias_target = _nearest_allowed(cloud, goal_pos, allowed)
            _retire_on_region(graph, tree, region_of_point, largest,
                              free_pos, free_yaw)
    return False


class _RegionLookup:
    """Adapter letting regions_traversed run off the point->region array."""

    def __init__(self, region_of_point: np.ndarray):
        self._arr = region_of_point

    def ids_for_points(self, point_indices) -> set:
        ids = set(int(r) for r in self._arr[np.asarray(point_indices).ravel()])
        ids.discard(-1)
        return ids


def _nearest_allowed(cloud, position, allowed):
    if len(allowed) == 0:
        return None
    d = np.linalg.norm(cloud.positions[allowed] - position, axis=1)
    return int(allowed[int(np.argmin(d))])


def _retire_on_region(graph, tree, region_of_point, region_id,
                      free_pos, free_yaw) -> None:
    for vid, status in list(tree.status.items()):
        if status in (_FREE, _ORPHAN):
            if (region_of_point[graph.nodes[vid].support] == region_id).any():
                tree.status[vid] = _RETIRED
    tree.refresh_connectivity()
    for vid in list(free_pos):
        if tree.status.get(vid) != _FREE:
            free_pos.pop(vid, None)
            free_yaw.pop(vid, None)


def _try_reconnect(graph, tree, new_id, growth, free_pos, free_yaw) -> None:
    """Attempt steering segments from a fresh vertex to nearby orphans."""
    orphans = tree.orphan_ids()
    if not orphans:
        return
    new = graph.nodes[new_id]
    dists = [(np.linalg.norm(graph.nodes[o].pose.position - new.pose.position), o)
             for o in orphans]
    dists.sort()
    attempts = 0
    for dist, oid in dists:
        if dist > growth.reconnect_radius or attempts >= growth.reconnect_attempts:
            break
        attempts += 1
        orphan = graph.nodes[oid]
        local = new.pose.transform_inverse(orphan.pose.position)
        if abs(local[2]) > 0.3 * max(dist, 0.1):
            continue
        hlocal = new.pose.rotation.T @ orphan.pose.heading
        theta = math.atan2(hlocal[1], hlocal[0])
        prim = solve_connection(new.kappa, (local[0], local[1], theta, orphan.kappa),
                                growth.kappa_max)
        if prim is None:
            continue
        graph.add_arc(new_id, oid, prim)
        tree.parent[oid] = new_id
        tree.status[oid] = _FREE
        tree.refresh_connectivity()
        for vid, s in tree.status.items():
            if s == _FREE and vid not in free_pos:
                free_pos[vid] = graph.nodes[vid].pose.position
                free_yaw[vid] = graph.nodes[vid].pose.yaw
        return


# ---------------------------------------------------------------------------
# Ranking and status
# ---------------------------------------------------------------------------

def _dijkstra(adjacency, costs, source, targets):
    """Min-cost path by summed vertex costs, tie-broken by (length, ids)."""
    best = {}
    start_key = (costs[source], 1, (source,))
    heap = [start_key]
    while heap:
        cost, length, path = heapq.heappop(heap)
        node = path[-1]
        if node in best:
            continue
        best[node] = (cost, length, path)
        if node in targets:
            return CandidatePath(path, cost)
        for nxt in adjacency.get(node, ()):
            if nxt not in best and nxt not in path:
                heapq.heappush(heap, (cost + costs[nxt], length + 1, path + (nxt,)))
    return None


def k_shortest_paths(graph: HypothesisGraph, m: int) -> list:
    """Up to m loopless min-cost root-to-goal paths (Yen's algorithm).

    Vertices with infinite cost are excluded outright. Paths are ordered by
    total vertex cost, then fewer vertices, then lexicographic vertex ids.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    costs = {v: float(graph.costs[v]) for v in range(len(graph.nodes))}
    finite = {v for v, c in costs.items() if math.isfinite(c)}
    if graph.root not in finite or not graph.goal_vertices:
        return []
    adjacency = {u: sorted(v for v, _ in graph.arcs.get(u, ()) if v in finite)
                 for u in finite}
    targets = set(graph.goal_vertices) & finite
    if not targets:
        return []

    first = _dijkstra(adjacency, costs, graph.root, targets)
    if first is None:
        return []
    found = [first]
    candidates: list = []
    seen = {first.vertices}

    while len(found) < m:
        prev = found[-1].vertices
        for i in range(len(prev) - 1):
            spur = prev[i]
            root_path = prev[:i + 1]
            removed_edges = set()
            for p in found:
                if len(p.vertices) > i and p.vertices[:i + 1] == root_path:
                    removed_edges.add((p.vertices[i], p.vertices[i + 1]))
            banned = set(root_path[:-1])
            sub_adj = {u: [v for v in adjacency[u]
                           if v not in banned and (u, v) not in removed_edges]
                       for u in adjacency if u not in banned}
            spur_path = _dijkstra(sub_adj, costs, spur, targets)
            if spur_path is None:
                continue
            total = root_path[:-1] + spur_path.vertices
            if total in seen:
                continue
            seen.add(total)
            total_cost = sum(costs[v] for v in total)
            heapq.heappush(candidates, (total_cost, len(total), total))
        if not candidates:
            break
        cost, _, verts = heapq.heappop(candidates)
        found.append(CandidatePath(verts, cost))
    return found


def path_status(graph: HypothesisGraph, paths: list):
    """Three-way verdict over the ranked candidate paths.

    Returns (PathStatus, confirmed_path_or_None). Confirmed safe when the
    best path has zero cost; confirmed unsafe when no goal vertex is
    reachable from the root through finite-cost vertices; undecided
    otherwise.
    """
    if paths and paths[0].cost == 0.0:
        return PathStatus.CONFIRMED_SAFE, paths[0]
    finite = {v for v in range(len(graph.nodes)) if math.isfinite(graph.costs[v])}
    reachable = set()
    if graph.root in finite:
        frontier = [graph.root]
        while frontier:
            u = frontier.pop()
            if u in reachable:
                continue
            reachable.add(u)
            frontier.extend(v for v, _ in graph.arcs.get(u, ()) if v in finite)
    if not any(g in reachable for g in graph.goal_vertices):
        return PathStatus.CONFIRMED_UNSAFE, None
    return PathStatus.UNDECIDED, None
