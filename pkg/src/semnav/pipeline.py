"""Closed-loop planning and the Monte Carlo evaluation protocols.

One run: take an initial view from the start pose, grow the hypothesis
graph, then iterate — rank the m most promising paths, stop early if one is
confirmed safe (zero cost) or all are confirmed unsafe (no finite-cost route
to a goal vertex), otherwise pick a next view near the start, fuse the new
measurement, and re-cost every vertex. After the loop the cheapest
finite-cost path is selected and judged against the ground-truth annotation.

The safety experiment reruns this over perturbed start/goal pairs and
reports the Table-style percentages per planner variant: B1 (semantic costs
disabled), B2 (initial view only, zero next views), and XN columns with X
next views. The ablation protocol compares view selectors by the mean
uncertainty of the initially promising path vertices after each view.
"""

from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fusion import FusionMode
from .geometry import CameraModel, Pose6D, camera_pose_from_robot
from .hypothesis import (CandidatePath, CostParams, GoalRegion, GrowthParams,
                         HypothesisGraph, PathStatus, grow_hypothesis_graph,
                         k_shortest_paths, path_status)
from .kinematics import TraversabilityParams, make_node
from .nbv import (NbvSelector, NbvWeights, evaluate_candidates,
                  generate_candidates, select_nbv, vertex_uncertainty)
from .regions import DbscanParams, two_stage_cluster
from .rng import stream, substream_seed
from .semantic_cloud import SafetyParams, partition_cloud
from .sensor import GroundTruthScene, NoiseModel, take_view


@dataclass(frozen=True)
class CameraConfig:
    width: int = 128
    height: int = 128
    fov_deg: float = 85.0
    mount_height: float = 1.6
    pitch_down: float = 0.75
    initial_pitch_down: float = 1.25   # first view checks footing, not the horizon

    def model(self) -> CameraModel:
        return CameraModel(self.width, self.height, self.fov_deg)


@dataclass(frozen=True)
class PipelineConfig:
    max_nbv_iterations: int = 5
    num_paths: int = 3                 # m most promising paths per iteration
    nbv_radius: float = 4.0
    nbv_candidates: int = 8
    nbv_budget: int = 80
    pixel_threshold: int = 10
    selector: NbvSelector = NbvSelector.FULL
    fusion_mode: FusionMode = FusionMode.MEASUREMENT_NORMALIZED
    master_seed: int = 0
    initial_view: bool = True
    graph_budget: int = 350
    merge_radius: float = 0.0          # 0 -> cloud resolution
    dbscan_eps: float = 0.0            # 0 -> 4 x cloud resolution
    dbscan_min_pts: int = 5
    stage2_eps: float = 0.0            # 0 -> stage-1 value
    stage2_min_pts: int = 0            # 0 -> stage-1 value
    semantic_costs: bool = True        # False reproduces the geometry-only baseline
    oracle_overlap: int = 4            # ground-truth unsafe points per vertex tolerated
    safety: SafetyParams = SafetyParams()
    cost: CostParams = CostParams()
    trav: TraversabilityParams = TraversabilityParams()
    growth: GrowthParams = GrowthParams()
    weights: NbvWeights = NbvWeights()
    camera: CameraConfig = CameraConfig()
    noise: NoiseModel = NoiseModel()

    def __post_init__(self):
        if self.max_nbv_iterations < 0:
            raise ValueError("max_nbv_iterations must be >= 0")
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")

    def resolve_merge_radius(self, cloud) -> float:
        return self.merge_radius if self.merge_radius > 0 else cloud.resolution

    def resolve_dbscan(self, cloud):
        eps = self.dbscan_eps if self.dbscan_eps > 0 else 4.0 * cloud.resolution
        stage1 = DbscanParams(eps, self.dbscan_min_pts)
        eps2 = self.stage2_eps if self.stage2_eps > 0 else eps
        minpts2 = self.stage2_min_pts if self.stage2_min_pts > 0 else self.dbscan_min_pts
        return stage1, DbscanParams(eps2, minpts2)


class Outcome(enum.Enum):
    SELECTED_SAFE = "selected-safe"
    SELECTED_UNSAFE = "selected-unsafe"
    CONFIRMED_SAFE = "confirmed-safe"
    CONFIRMED_UNSAFE = "confirmed-unsafe"


@dataclass
class TrialResult:
    outcome: Outcome
    nbv_count: int
    selected_path: tuple | None
    uncertainty_trace: list
    judged_safe: bool | None
    seed: int

    def __post_init__(self):
        if self.outcome is Outcome.CONFIRMED_UNSAFE and self.selected_path is not None:
            raise ValueError("a confirmed-unsafe trial cannot carry a selected path")


@dataclass(frozen=True)
class SafetyOracle:
    """Ground-truth unsafe annotation used only for scoring, never planning."""

    unsafe_mask: np.ndarray
    overlap_threshold: int = 4

    def __post_init__(self):
        if self.overlap_threshold < 1:
            raise ValueError("overlap threshold must be >= 1")

    @staticmethod
    def from_scene(scene: GroundTruthScene, overlap_threshold: int = 4) -> "SafetyOracle":
        return SafetyOracle(scene.unsafe_point_mask, overlap_threshold)


def judge_path(path_nodes, oracle: SafetyOracle) -> bool:
    """True when safe: no vertex overlaps the unsafe ground truth in more
    than the threshold number of support points (strictly more is unsafe)."""
    for node in path_nodes:
        overlap = int(oracle.unsafe_mask[np.atleast_1d(node.support)].sum())
        if overlap > oracle.overlap_threshold:
            return False
    return True


# ---------------------------------------------------------------------------
# One traced run
# ---------------------------------------------------------------------------

@dataclass
class Snapshot:
    views_taken: int
    status: PathStatus
    confirmed: CandidatePath | None
    cheapest: CandidatePath | None
    mean_sigma: float


@dataclass
class PipelineTrace:
    snapshots: list
    graph: HypothesisGraph | None
    planning_failed: bool
    seed: int
    diagnostics: list = field(default_factory=list)


def _unclear_path_vertices(graph: HypothesisGraph, paths) -> list:
    seen, out = set(), []
    for p in paths:
        for v in p.vertices:
            if v not in seen and 0.0 < graph.costs[v] < math.inf:
                seen.add(v)
                out.append(v)
    return out


def _mean_sigma(graph, vertex_ids, cloud) -> float:
    if not vertex_ids:
        return 0.0
    return float(np.mean([vertex_uncertainty(graph.nodes[v], cloud)
                          for v in vertex_ids]))


def run_pipeline_traced(scene: GroundTruthScene, cloud, start: Pose6D,
                        goal: GoalRegion, config: PipelineConfig, seed: int,
                        max_views: int,
                        collect_diagnostics: bool = False) -> PipelineTrace:
    """Run up to `max_views` view iterations, recording one snapshot per
    iteration count (snapshot[i] describes the state after i views). The
    budget-X outcome of the same seed equals reading this trace at X, since
    the view sequence of budget X is a prefix of budget X+1's."""
    camera = config.camera.model()
    K = camera.intrinsics
    img = (camera.height, camera.width)

    start_node = make_node(cloud, start.position, start.heading, 0.0, config.trav)
    if start_node is None:
        raise ValueError("start pose cannot be attached with tau > 0")
    start_pose = start_node.pose

    if config.initial_view:
        cam0 = camera_pose_from_robot(start_pose, config.camera.mount_height,
                                      config.camera.initial_pitch_down)
        view = take_view(scene, cloud, cam0, K, img, config.noise,
                         substream_seed(seed, "initial-view"))
        from .semantic_cloud import integrate_view
        integrate_view(cloud, view, config.resolve_merge_radius(cloud),
                       config.fusion_mode)

    partition = partition_cloud(cloud, cloud.catalog, config.safety)
    stage1, stage2 = config.resolve_dbscan(cloud)
    region_set = two_stage_cluster(cloud, partition, stage1, stage2)

    graph = grow_hypothesis_graph(cloud, partition, region_set, start_pose, goal,
                                  config.graph_budget,
                                  substream_seed(seed, "graph"),
                                  config.trav, config.growth)
    if not graph.goal_vertices:
        return PipelineTrace([], graph, True, seed)

    def recost():
        if config.semantic_costs:
            graph.recost(cloud, partition, config.safety, config.cost)
        else:
            graph.costs = np.zeros(len(graph.nodes))

    recost()
    paths = k_shortest_paths(graph, config.num_paths)
    status, confirmed = path_status(graph, paths)
    trace_set = _unclear_path_vertices(graph, paths)
    if not trace_set:
        trace_set = sorted({v for p in paths for v in p.vertices})
    snapshots = [Snapshot(0, status, confirmed, paths[0] if paths else None,
                          _mean_sigma(graph, trace_set, cloud))]
    diagnostics = []

    from .semantic_cloud import integrate_view
    goal_pos = goal.center.position
    for i in range(max_views):
        if snapshots[-1].status is not PathStatus.UNDECIDED:
            break
        nbv_vertices = _unclear_path_vertices(graph, paths)
        candidates = generate_candidates(cloud, partition, start_pose,
                                         config.nbv_radius, config.nbv_candidates,
                                         substream_seed(seed, "nbv", i), goal_pos,
                                         config.trav, config.growth,
                                         config.nbv_budget)
        if not candidates or not nbv_vertices:
            break
        weights = config.weights
        if config.selector is NbvSelector.GEOMETRY_ONLY:
            weights = weights.geometry_only()
        elif config.selector is NbvSelector.UNCERTAINTY_ONLY:
            weights = weights.uncertainty_only()
        evals = evaluate_candidates(candidates, graph, nbv_vertices, cloud,
                                    start_pose, camera, weights,
                                    config.pixel_threshold,
                                    config.camera.mount_height,
                                    config.camera.pitch_down)
        selected = select_nbv(evals, config.selector,
                              rng=stream(seed, "select", i))
        if collect_diagnostics:
            diagnostics.append((evals, selected))
        if selected is None:
            break
        view = take_view(scene, cloud, selected.camera, K, img, config.noise,
                         substream_seed(seed, "sensor", i))
        integrate_view(cloud, view, config.resolve_merge_radius(cloud),
                       config.fusion_mode)
        partition = partition_cloud(cloud, cloud.catalog, config.safety)
        recost()
        paths = k_shortest_paths(graph, config.num_paths)
        status, confirmed = path_status(graph, paths)
        snapshots.append(Snapshot(i + 1, status, confirmed,
                                  paths[0] if paths else None,
                                  _mean_sigma(graph, trace_set, cloud)))

    return PipelineTrace(snapshots, graph, False, seed, diagnostics)


def outcome_at(trace: PipelineTrace, budget: int,
               oracle: SafetyOracle) -> TrialResult:
    """Read a trial outcome for a given view budget off a traced run."""
    if trace.planning_failed:
        return TrialResult(Outcome.CONFIRMED_UNSAFE, 0, None, [], None, trace.seed)
    graph = trace.graph
    upto = [s for s in trace.snapshots if s.views_taken <= budget]
    sigma_trace = [s.mean_sigma for s in upto]
    for snap in upto:
        if snap.status is PathStatus.CONFIRMED_SAFE:
            nodes = [graph.nodes[v] for v in snap.confirmed.vertices]
            return TrialResult(Outcome.CONFIRMED_SAFE, snap.views_taken,
                               snap.confirmed.vertices, sigma_trace,
                               judge_path(nodes, oracle), trace.seed)
        if snap.status is PathStatus.CONFIRMED_UNSAFE:
            return TrialResult(Outcome.CONFIRMED_UNSAFE, snap.views_taken, None,
                               sigma_trace, None, trace.seed)
    last = upto[-1]
    if last.cheapest is None:
        return TrialResult(Outcome.CONFIRMED_UNSAFE, last.views_taken, None,
                           sigma_trace, None, trace.seed)
    nodes = [graph.nodes[v] for v in last.cheapest.vertices]
    safe = judge_path(nodes, oracle)
    outcome = Outcome.SELECTED_SAFE if safe else Outcome.SELECTED_UNSAFE
    return TrialResult(outcome, last.views_taken, last.cheapest.vertices,
                       sigma_trace, safe, trace.seed)


def run_pipeline(scene: GroundTruthScene, cloud, start: Pose6D, goal: GoalRegion,
                 config: PipelineConfig,
                 collect_diagnostics: bool = False):
    """Single full run at the configured view budget.

    Returns (TrialResult, PipelineTrace)."""
    trace = run_pipeline_traced(scene, cloud, start, goal, config,
                                config.master_seed, config.max_nbv_iterations,
                                collect_diagnostics)
    oracle = SafetyOracle.from_scene(scene, config.oracle_overlap)
    return outcome_at(trace, config.max_nbv_iterations, oracle), trace


# ---------------------------------------------------------------------------
# Safety experiment (Table-style metrics)
# ---------------------------------------------------------------------------

@dataclass
class MetricsTable:
    columns: list
    safe_pct: list
    unsafe_pct: list
    cs_pct: list       # None renders as NA (baseline without confirmation)
    cn_pct: list

    def to_csv(self, path) -> None:
        def fmt(v):
            return "NA" if v is None else f"{v:.6g}"
        with open(path, "w", newline="") as f:
            f.write("metric," + ",".join(self.columns) + "\n")
            f.write("Safe%," + ",".join(fmt(v) for v in self.safe_pct) + "\n")
            f.write("Unsafe%," + ",".join(fmt(v) for v in self.unsafe_pct) + "\n")
            f.write("CS%," + ",".join(fmt(v) for v in self.cs_pct) + "\n")
            f.write("CN%," + ",".join(fmt(v) for v in self.cn_pct) + "\n")

    def value(self, row: str, column: str):
        rows = {"Safe%": self.safe_pct, "Unsafe%": self.unsafe_pct,
                "CS%": self.cs_pct, "CN%": self.cn_pct}
        return rows[row][self.columns.index(column)]


def _perturb_pose(rng, reference: Pose6D, goal_pos, radius: float = 1.0):
    r = radius * math.sqrt(rng.uniform())
    ang = rng.uniform() * 2.0 * math.pi
    x = reference.position[0] + r * math.cos(ang)
    y = reference.position[1] + r * math.sin(ang)
    yaw = math.atan2(goal_pos[1] - y, goal_pos[0] - x)
    return Pose6D.from_xyz_yaw(x, y, reference.position[2], yaw)


def _perturbed_endpoints(scene, start_ref, goal_ref, trav, rng,
                         max_attempts: int = 100):
    cloud = scene.make_cloud()
    for _ in range(max_attempts):
        start = _perturb_pose(rng, start_ref, goal_ref.center.position)
        goal_center = _perturb_pose(rng, goal_ref.center, goal_ref.center.position)
        if (make_node(cloud, start.position, start.heading, 0.0, trav) is not None
                and make_node(cloud, goal_center.position, goal_center.heading,
                              0.0, trav) is not None):
            return start, GoalRegion(goal_center, goal_ref.radius)
    return None


def _safety_trial(args):
    scene, start_ref, goal_ref, config, columns, trial = args
    trial_seed = substream_seed(config.master_seed, "trial", trial)
    endpoints = _perturbed_endpoints(scene, start_ref, goal_ref, config.trav,
                                     stream(trial_seed, "perturb"))
    if endpoints is None:
        return {"trial": trial, "seed": trial_seed, "skipped": True}
    start, goal = endpoints
    oracle = SafetyOracle.from_scene(scene, config.oracle_overlap)
    record = {"trial": trial, "seed": trial_seed, "skipped": False,
              "start": [float(v) for v in start.position],
              "goal": [float(v) for v in goal.center.position],
              "outcomes": {}}

    budgets = sorted({0 if c == "B2" else int(c[:-1])
                      for c in columns if c != "B1"})
    if budgets:
        trace = run_pipeline_traced(scene, scene.make_cloud(), start, goal,
                                    config, trial_seed, max(budgets))
        for col in columns:
            if col == "B1":
                continue
            budget = 0 if col == "B2" else int(col[:-1])
            result = outcome_at(trace, budget, oracle)
            record["outcomes"][col] = _encode_result(result)
        record["uncertainty_trace"] = [s.mean_sigma for s in trace.snapshots]

    if "B1" in columns:
        b1_config = replace(config, semantic_costs=False, initial_view=False)
        b1_trace = run_pipeline_traced(scene, scene.make_cloud(), start, goal,
                                       b1_config, trial_seed, 0)
        record["outcomes"]["B1"] = _encode_result(outcome_at(b1_trace, 0, oracle))
    return record


def _encode_result(result: TrialResult) -> dict:
    return {"outcome": result.outcome.value,
            "judged_safe": result.judged_safe,
            "views": result.nbv_count,
            "path": list(result.selected_path) if result.selected_path else None}


def default_columns(max_nbv: int) -> list:
    return ["B1", "B2"] + [f"{x}N" for x in range(1, max_nbv + 1)]


def run_safety_experiment(bundle, config: PipelineConfig, trials: int,
                          columns: list | None = None, jobs: int = 1,
                          out_dir=None) -> MetricsTable:
    """Monte Carlo path-safety protocol over perturbed start/goal pairs.

    `bundle` is a SceneBundle (scene + reference start/goal). Returns the
    metrics table; when `out_dir` is set, writes metrics.csv, trials.jsonl
    and a bar-chart figure there.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if columns is None:
        columns = default_columns(config.max_nbv_iterations)
    tasks = [(bundle.scene, bundle.start, bundle.goal, config, columns, t)
             for t in range(trials)]
    records = _run_tasks(_safety_trial, tasks, jobs)

    counted = [r for r in records if not r["skipped"]]
    n = max(len(counted), 1)
    safe, unsafe, cs, cn = [], [], [], []
    for col in columns:
        outcomes = [r["outcomes"][col] for r in counted]
        n_safe = sum(1 for o in outcomes if o["judged_safe"] is True)
        n_unsafe = sum(1 for o in outcomes if o["judged_safe"] is False)
        n_cs = sum(1 for o in outcomes if o["outcome"] == Outcome.CONFIRMED_SAFE.value)
        n_cn = sum(1 for o in outcomes if o["outcome"] == Outcome.CONFIRMED_UNSAFE.value)
        safe.append(100.0 * n_safe / n)
        unsafe.append(100.0 * n_unsafe / n)
        cs.append(None if col == "B1" else 100.0 * n_cs / n)
        cn.append(None if col == "B1" else 100.0 * n_cn / n)
    table = MetricsTable(list(columns), safe, unsafe, cs, cn)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        table.to_csv(os.path.join(out_dir, "metrics.csv"))
        with open(os.path.join(out_dir, "trials.jsonl"), "w") as f:
            for r in records:
                f.write(json.dumps(r, sort_keys=True) + "\n")
        from .figures import safety_metrics_figure
        safety_metrics_figure(table, os.path.join(out_dir, "safety_metrics.png"))
    return table


# ---------------------------------------------------------------------------
# NBV selector ablation (uncertainty-decay curves)
# ---------------------------------------------------------------------------

ABLATION_SELECTORS = (NbvSelector.FULL, NbvSelector.RANDOM,
                      NbvSelector.GEOMETRY_ONLY, NbvSelector.UNCERTAINTY_ONLY)


def _ablation_trial(args):
    scene, start_ref, goal_ref, config, iterations, trial = args
    trial_seed = substream_seed(config.master_seed, "ablation-trial", trial)
    camera = config.camera.model()
    K = camera.intrinsics
    img = (camera.height, camera.width)
    from .semantic_cloud import integrate_view

    for attempt in range(5):
        rng = stream(trial_seed, "perturb", attempt)
        endpoints = _perturbed_endpoints(scene, start_ref, goal_ref,
                                         config.trav, rng)
        if endpoints is None:
            continue
        start, goal = endpoints
        base_cloud = scene.make_cloud()
        start_node = make_node(base_cloud, start.position, start.heading, 0.0,
                               config.trav)
        partition0 = partition_cloud(base_cloud, base_cloud.catalog, config.safety)
        stage1, stage2 = config.resolve_dbscan(base_cloud)
        regions0 = two_stage_cluster(base_cloud, partition0, stage1, stage2)
        try:
            graph = grow_hypothesis_graph(base_cloud, partition0, regions0,
                                          start_node.pose, goal,
                                          config.graph_budget,
                                          substream_seed(trial_seed, "graph"),
                                          config.trav, config.growth)
        except ValueError:
            continue
        if not graph.goal_vertices:
            continue
        graph.recost(base_cloud, partition0, config.safety, config.cost)
        paths0 = k_shortest_paths(graph, config.num_paths)
        fixed_set = _unclear_path_vertices(graph, paths0)
        if not fixed_set:
            continue

        sigma0 = _mean_sigma(graph, fixed_set, base_cloud)
        traces = {}
        for selector in ABLATION_SELECTORS:
            cloud = base_cloud.copy()
            weights = config.weights
            if selector is NbvSelector.GEOMETRY_ONLY:
                weights = weights.geometry_only()
            elif selector is NbvSelector.UNCERTAINTY_ONLY:
                weights = weights.uncertainty_only()
            if config.initial_view:
                cam0 = camera_pose_from_robot(start_node.pose,
                                              config.camera.mount_height,
                                              config.camera.initial_pitch_down)
                view = take_view(scene, cloud, cam0, K, img, config.noise,
                                 substream_seed(trial_seed, "initial-view"))
                integrate_view(cloud, view, config.resolve_merge_radius(cloud),
                               config.fusion_mode)
            partition = partition_cloud(cloud, cloud.catalog, config.safety)
            trace = [sigma0]
            for i in range(iterations):
                graph.recost(cloud, partition, config.safety, config.cost)
                paths = k_shortest_paths(graph, config.num_paths)
                nbv_vertices = _unclear_path_vertices(graph, paths) or fixed_set
                candidates = generate_candidates(
                    cloud, partition, start_node.pose, config.nbv_radius,
                    config.nbv_candidates, substream_seed(trial_seed, "nbv", i),
                    goal.center.position, config.trav, config.growth,
                    config.nbv_budget)
                selected = None
                if candidates:
                    evals = evaluate_candidates(candidates, graph, nbv_vertices,
                                                cloud, start_node.pose, camera,
                                                weights, config.pixel_threshold,
                                                config.camera.mount_height,
                                                config.camera.pitch_down)
                    selected = select_nbv(evals, selector,
                                          rng=stream(trial_seed, "select", i))
                if selected is not None:
                    view = take_view(scene, cloud, selected.camera, K, img,
                                     config.noise,
                                     substream_seed(trial_seed, "sensor", i))
                    integrate_view(cloud, view, config.resolve_merge_radius(cloud),
                                   config.fusion_mode)
                    partition = partition_cloud(cloud, cloud.catalog, config.safety)
                trace.append(_mean_sigma(graph, fixed_set, cloud))
            traces[selector.value] = trace
        return {"trial": trial, "seed": trial_seed, "skipped": False,
                "traces": traces}
    return {"trial": trial, "seed": trial_seed, "skipped": True}


def run_nbv_ablation(bundle, config: PipelineConfig, trials: int,
                     iterations: int | None = None, jobs: int = 1,
                     out_dir=None):
    """Per-selector uncertainty-decay curves, averaged over trials.

    Runs a fixed number of view iterations per selector (no early stop) and
    tracks the mean class-summed uncertainty of the initially promising path
    vertices; trace index 0 is the fresh-cloud value, before any view.
    Returns (mean_traces, per_trial), where mean_traces maps selector name
    to a length iterations+1 array and per_trial holds the (n_trials,
    iterations+1) matrix per selector.
    """
    if iterations is None:
        iterations = config.max_nbv_iterations
    tasks = [(bundle.scene, bundle.start, bundle.goal, config, iterations, t)
             for t in range(trials)]
    records = _run_tasks(_ablation_trial, tasks, jobs)
    kept = [r for r in records if not r["skipped"]]
    if not kept:
        raise RuntimeError("no ablation trial produced a usable graph")
    per_trial = {sel.value: np.array([r["traces"][sel.value] for r in kept])
                 for sel in ABLATION_SELECTORS}
    mean_traces = {name: arr.mean(axis=0) for name, arr in per_trial.items()}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "ablation.csv")
        with open(path, "w", newline="") as f:
            f.write("selector," + ",".join(f"after_{i}_views"
                                           for i in range(iterations + 1)) + "\n")
            for name in sorted(mean_traces):
                f.write(name + "," + ",".join(f"{v:.9g}" for v in mean_traces[name])
                        + "\n")
        from .figures import ablation_figure
        ablation_figure(mean_traces, os.path.join(out_dir, "ablation.png"))
    return mean_traces, per_trial


def _run_tasks(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))
