"""Hypothesis path planning over uncertain semantic point clouds."""

from .fusion import FusionMode, fuse_class_measurements
from .geometry import CameraModel, Pose6D, camera_pose_from_robot
from .hypothesis import (CandidatePath, CostParams, GoalRegion, GrowthParams,
                         HypothesisGraph, PathStatus, grow_hypothesis_graph,
                         k_shortest_paths, node_cost, path_status)
from .kinematics import (MotionPrimitive, TrajectoryNode, TraversabilityParams,
                         extend, integrate_primitive, primitive_library,
                         project_to_surface, traversability)
from .nbv import (NbvCandidate, NbvSelector, NbvWeights, VisibilityImage,
                  generate_candidates, render_visibility, select_nbv,
                  vertex_uncertainty, vertex_visibility)
from .pipeline import (CameraConfig, Outcome, PipelineConfig, SafetyOracle,
                       TrialResult, judge_path, run_nbv_ablation, run_pipeline,
                       run_safety_experiment)
from .regions import (DbscanParams, RegionSet, UnclearRegion, dbscan,
                      regions_traversed, two_stage_cluster)
from .semantic_cloud import (ClassCatalog, SafetyLabel, SafetyParams,
                             SafetyPartition, SemanticPoint, SemanticPointCloud,
                             ViewMeasurement, aggregate_safety, backproject_pixel,
                             classify_point, init_cloud, integrate_view,
                             partition_cloud)
from .sensor import (GroundTruthScene, NoiseModel, RenderedView,
                     render_ground_truth, simulate_passes, take_view)

__version__ = "0.1.0"
