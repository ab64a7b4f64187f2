"""INI run configuration: every tunable of every module in one flat file.

Unknown sections or keys are rejected. The effective configuration (defaults
plus file plus command-line overrides) can be echoed back as INI text, and
that echo is written verbatim into every output directory so any artifact is
reproducible from the config alone.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace

from .fusion import FusionMode
from .hypothesis import CostParams, GrowthParams
from .kinematics import TraversabilityParams
from .nbv import NbvSelector, NbvWeights
from .pipeline import CameraConfig, PipelineConfig
from .semantic_cloud import ClassCatalog, SafetyParams
from .sensor import NoiseModel


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section -> key -> (parser, default-as-string)
SCHEMA = {
    "scene": {
        "name": (str, "two-bridges"),
        "seed": (int, "0"),
        "spacing": (float, "0.16"),
        "jitter": (float, "0.03"),
    },
    "classes": {
        "names": (str, "grass,gravel,water,mud"),
        "safe": (str, "grass,gravel"),
        "unsafe": (str, "water,mud"),
    },
    "safety": {
        "theta_safe": (float, "0.9"),
        "theta_unsafe": (float, "0.3"),
        "sigma_weight": (float, "3.0"),
    },
    "fusion": {
        "mode": (str, "measurement-normalized"),
        "merge_radius": (float, "0.0"),
    },
    "regions": {
        "eps": (float, "0.0"),
        "min_pts": (int, "5"),
        "stage2_eps": (float, "0.0"),
        "stage2_min_pts": (int, "0"),
    },
    "kinematics": {
        "max_roll": (float, "0.35"),
        "max_pitch": (float, "0.35"),
        "max_residual": (float, "0.12"),
        "support_size": (int, "20"),
        "max_snap": (float, "1.0"),
        "max_support_distance": (float, "0.6"),
        "kappa_max": (float, "1.0"),
        "step_length": (float, "0.5"),
    },
    "planner": {
        "graph_budget": (int, "350"),
        "goal_bias": (float, "0.15"),
        "heading_weight": (float, "0.5"),
        "max_restarts": (int, "3"),
        "reconnect_radius": (float, "1.2"),
        "reconnect_attempts": (int, "2"),
        "unsafe_count_threshold": (int, "4"),
        "start_relax_radius": (float, "1.0"),
        "relax_mean_threshold": (float, "0.05"),
        "footprint_radius": (float, "0.5"),
        "num_paths": (int, "3"),
    },
    "nbv": {
        "radius": (float, "4.0"),
        "candidates": (int, "8"),
        "budget": (int, "80"),
        "pixel_threshold": (int, "10"),
        "selector": (str, "full"),
        "beta_distance": (float, "0.4"),
        "beta_angle": (float, "0.05"),
        "beta_visible": (float, "0.25"),
        "beta_gain": (float, "0.3"),
        "alpha_visibility": (float, "0.5"),
        "alpha_uncertainty": (float, "0.5"),
    },
    "camera": {
        "width": (int, "128"),
        "height": (int, "128"),
        "fov_deg": (float, "85.0"),
        "mount_height": (float, "1.6"),
        "pitch_down": (float, "0.75"),
        "initial_pitch_down": (float, "1.25"),
    },
    "sensor": {
        "base_logit": (float, "6.0"),
        "distance_coeff": (float, "0.42"),
        "boundary_coeff": (float, "1.2"),
        "boundary_scale": (float, "0.25"),
        "passes": (int, "50"),
    },
    "pipeline": {
        "max_nbv_iterations": (int, "5"),
        "initial_view": (_bool, "true"),
        "master_seed": (int, "0"),
        "semantic_costs": (_bool, "true"),
        "oracle_overlap": (int, "4"),
        "start_x": (str, "auto"),
        "start_y": (str, "auto"),
        "start_yaw": (str, "auto"),
        "goal_x": (str, "auto"),
        "goal_y": (str, "auto"),
        "goal_radius": (str, "auto"),
    },
    "experiment": {
        "trials": (int, "100"),
        "jobs": (int, "1"),
    },
}

_SELECTORS = {"full": NbvSelector.FULL, "random": NbvSelector.RANDOM,
              "geometry": NbvSelector.GEOMETRY_ONLY,
              "uncertainty": NbvSelector.UNCERTAINTY_ONLY}
_FUSION_MODES = {"measurement-normalized": FusionMode.MEASUREMENT_NORMALIZED,
                 "literal-paper": FusionMode.LITERAL_PAPER}


@dataclass
class RunConfig:
    """Parsed and validated configuration; `values[section][key]` holds the
    typed entries and the builder methods assemble module parameter sets."""

    values: dict

    def get(self, section: str, key: str):
        return self.values[section][key]

    def catalog(self) -> ClassCatalog:
        names = [n.strip() for n in self.get("classes", "names").split(",") if n.strip()]
        index = {n: i for i, n in enumerate(names)}

        def resolve(csv_text, which):
            out = set()
            for token in csv_text.split(","):
                token = token.strip()
                if not token:
                    continue
                if token not in index:
                    raise ConfigError(f"[classes] {which} names unknown class {token!r}")
                out.add(index[token])
            return out

        try:
            return ClassCatalog(tuple(names),
                                frozenset(resolve(self.get("classes", "safe"), "safe")),
                                frozenset(resolve(self.get("classes", "unsafe"), "unsafe")))
        except ValueError as e:
            raise ConfigError(f"invalid class catalog: {e}") from e

    def pipeline_config(self) -> PipelineConfig:
        g = self.get
        try:
            selector = _SELECTORS[g("nbv", "selector")]
        except KeyError:
            raise ConfigError(f"[nbv] selector must be one of {sorted(_SELECTORS)}")
        try:
            fusion = _FUSION_MODES[g("fusion", "mode")]
        except KeyError:
            raise ConfigError(f"[fusion] mode must be one of {sorted(_FUSION_MODES)}")
        try:
            return PipelineConfig(
                max_nbv_iterations=g("pipeline", "max_nbv_iterations"),
                num_paths=g("planner", "num_paths"),
                nbv_radius=g("nbv", "radius"),
                nbv_candidates=g("nbv", "candidates"),
                nbv_budget=g("nbv", "budget"),
                pixel_threshold=g("nbv", "pixel_threshold"),
                selector=selector,
                fusion_mode=fusion,
                master_seed=g("pipeline", "master_seed"),
                initial_view=g("pipeline", "initial_view"),
                graph_budget=g("planner", "graph_budget"),
                merge_radius=g("fusion", "merge_radius"),
                dbscan_eps=g("regions", "eps"),
                dbscan_min_pts=g("regions", "min_pts"),
                stage2_eps=g("regions", "stage2_eps"),
                stage2_min_pts=g("regions", "stage2_min_pts"),
                semantic_costs=g("pipeline", "semantic_costs"),
                oracle_overlap=g("pipeline", "oracle_overlap"),
                safety=SafetyParams(g("safety", "theta_safe"),
                                    g("safety", "theta_unsafe"),
                                    g("safety", "sigma_weight")),
                cost=CostParams(g("planner", "unsafe_count_threshold"),
                                g("planner", "start_relax_radius"),
                                g("planner", "relax_mean_threshold"),
                                g("planner", "footprint_radius")),
                trav=TraversabilityParams(g("kinematics", "max_roll"),
                                          g("kinematics", "max_pitch"),
                                          g("kinematics", "max_residual"),
                                          g("kinematics", "support_size"),
                                          g("kinematics", "max_snap"),
                                          g("kinematics", "max_support_distance")),
                growth=GrowthParams(g("planner", "goal_bias"),
                                    g("kinematics", "kappa_max"),
                                    g("kinematics", "step_length"),
                                    g("planner", "heading_weight"),
                                    g("planner", "max_restarts"),
                                    g("planner", "reconnect_radius"),
                                    g("planner", "reconnect_attempts")),
                weights=NbvWeights(g("nbv", "beta_distance"),
                                   g("nbv", "beta_angle"),
                                   g("nbv", "beta_visible"),
                                   g("nbv", "beta_gain"),
                                   g("nbv", "alpha_visibility"),
                                   g("nbv", "alpha_uncertainty")),
                camera=CameraConfig(g("camera", "width"), g("camera", "height"),
                                    g("camera", "fov_deg"),
                                    g("camera", "mount_height"),
                                    g("camera", "pitch_down"),
                                    g("camera", "initial_pitch_down")),
                noise=NoiseModel(g("sensor", "base_logit"),
                                 g("sensor", "distance_coeff"),
                                 g("sensor", "boundary_coeff"),
                                 g("sensor", "boundary_scale"),
                                 g("sensor", "passes")),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def scene_bundle(self, scene_path=None):
        """Build (or load) the scene and apply start/goal overrides."""
        from .hypothesis import GoalRegion
        from .geometry import Pose6D
        from .scenes import generate_scene
        import math

        if scene_path is not None:
            from .io_formats import load_scene
            from .sensor import GroundTruthScene
            from .scenes import SceneBundle
            positions, classes, catalog = load_scene(scene_path)
            scene = GroundTruthScene(positions, classes, catalog)
            lo, hi = positions.min(axis=0), positions.max(axis=0)
            start = Pose6D.from_xyz_yaw(lo[0] + 0.2 * (hi[0] - lo[0]),
                                        (lo[1] + hi[1]) / 2, 0.0, 0.0)
            goal = GoalRegion(Pose6D.from_xyz_yaw(lo[0] + 0.8 * (hi[0] - lo[0]),
                                                  (lo[1] + hi[1]) / 2, 0.0, 0.0), 0.8)
            bundle = SceneBundle(scene, start, goal)
        else:
            bundle = generate_scene(self.get("scene", "name"),
                                    seed=self.get("scene", "seed"),
                                    spacing=self.get("scene", "spacing"),
                                    jitter=self.get("scene", "jitter"))

        def override(key, current):
            raw = self.get("pipeline", key)
            if raw == "auto":
                return current
            try:
                return float(raw)
            except ValueError:
                raise ConfigError(f"[pipeline] {key} must be a number or 'auto'")

        sx = override("start_x", bundle.start.position[0])
        sy = override("start_y", bundle.start.position[1])
        gx = override("goal_x", bundle.goal.center.position[0])
        gy = override("goal_y", bundle.goal.center.position[1])
        syaw_raw = self.get("pipeline", "start_yaw")
        syaw = math.atan2(gy - sy, gx - sx) if syaw_raw == "auto" else float(syaw_raw)
        radius = override("goal_radius", bundle.goal.radius)
        gyaw = math.atan2(gy - sy, gx - sx)
        bundle.start = Pose6D.from_xyz_yaw(sx, sy, bundle.start.position[2], syaw)
        bundle.goal = GoalRegion(
            Pose6D.from_xyz_yaw(gx, gy, bundle.goal.center.position[2], gyaw), radius)
        return bundle

    def validate(self) -> None:
        """Construct every parameter object, surfacing invariant violations."""
        self.catalog()
        self.pipeline_config()
        if self.get("experiment", "trials") < 1:
            raise ConfigError("[experiment] trials must be >= 1")
        if self.get("experiment", "jobs") < 1:
            raise ConfigError("[experiment] jobs must be >= 1")

    def effective_ini(self) -> str:
        out = io.StringIO()
        for section in SCHEMA:
            out.write(f"[{section}]\n")
            for key in SCHEMA[section]:
                value = self.values[section][key]
                if isinstance(value, bool):
                    value = "true" if value else "false"
                out.write(f"{key} = {value}\n")
            out.write("\n")
        return out.getvalue()


def default_config() -> RunConfig:
    values = {section: {key: parser(default) for key, (parser, default) in keys.items()}
              for section, keys in SCHEMA.items()}
    return RunConfig(values)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid with an INI file, overlaid with CLI overrides.

    `overrides` maps (section, key) to a raw string. Unknown sections or
    keys anywhere raise ConfigError.
    """
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse config: {e}") from e
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                typ = SCHEMA[section][key][0]
                try:
                    cfg.values[section][key] = typ(raw)
                except (ValueError, ConfigError) as e:
                    raise ConfigError(f"[{section}] {key}: {e}") from e
    for (section, key), raw in (overrides or {}).items():
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        cfg.values[section][key] = SCHEMA[section][key][0](str(raw))
    return cfg
