"""Built-in synthetic scenes for closed-loop runs.

Each generator returns the annotated ground-truth scene plus reference
start/goal poses. Scenes are jittered point grids; geometry is desk-scale
so full Monte Carlo protocols stay cheap.

* flat-corridor: one flat all-safe lawn; the trivial regression scene.
* two-bridges: two banks separated by an impassable water trench, crossed
  by a short straight mud bridge (tempting, truly unsafe) and a longer
  gravel detour bridge (truly safe). Geometry alone cannot tell them apart.
* annulus-trap: start ringed by a water moat inside an otherwise safe
  field; every hypothesis must cross the moat.
* inclined-field: a tilted lawn with a mud strip, exercising nonzero pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose6D
from .hypothesis import GoalRegion
from .semantic_cloud import ClassCatalog
from .sensor import GroundTruthScene

DEFAULT_CATALOG = ClassCatalog(
    class_names=("grass", "gravel", "water", "mud"),
    safe_set=frozenset({0, 1}),
    unsafe_set=frozenset({2, 3}),
)
GRASS, GRAVEL, WATER, MUD = 0, 1, 2, 3


@dataclass
class SceneBundle:
    scene: GroundTruthScene
    start: Pose6D
    goal: GoalRegion


def _patch(rng, x0, x1, y0, y1, z, cls, spacing, jitter, z_jitter=0.01,
           keep=None):
    """Jittered grid patch; `z` is a constant or a z(x, y) callable and
    `keep` an optional mask predicate over (x, y) arrays."""
    xs = np.arange(x0, x1 + spacing / 2, spacing)
    ys = np.arange(y0, y1 + spacing / 2, spacing)
    gx, gy = np.meshgrid(xs, ys)
    gx = gx.ravel() + rng.uniform(-jitter, jitter, gx.size)
    gy = gy.ravel() + rng.uniform(-jitter, jitter, gy.size)
    if keep is not None:
        mask = keep(gx, gy)
        gx, gy = gx[mask], gy[mask]
    gz = z(gx, gy) if callable(z) else np.full_like(gx, float(z))
    gz = gz + rng.uniform(-z_jitter, z_jitter, gx.size)
    pts = np.column_stack([gx, gy, gz])
    return pts, np.full(len(pts), cls, dtype=np.int64)


def _bundle(parts, start_xy_yaw, goal_xy, goal_radius, goal_z=0.0):
    positions = np.vstack([p for p, _ in parts])
    classes = np.concatenate([c for _, c in parts])
    scene = GroundTruthScene(positions, classes, DEFAULT_CATALOG)
    sx, sy, syaw = start_xy_yaw
    start = Pose6D.from_xyz_yaw(sx, sy, 0.0, syaw)
    gx, gy = goal_xy
    gyaw = math.atan2(gy - sy, gx - sx)
    goal = GoalRegion(Pose6D.from_xyz_yaw(gx, gy, goal_z, gyaw), goal_radius)
    return SceneBundle(scene, start, goal)


def flat_corridor(seed: int = 0, spacing: float = 0.16, jitter: float = 0.03):
    rng = np.random.default_rng(seed)
    parts = [_patch(rng, 0.0, 6.0, -1.5, 1.5, 0.0, GRASS, spacing, jitter)]
    return _bundle(parts, (0.8, 0.0, 0.0), (5.0, 0.0), 0.8)


def two_bridges(seed: int = 0, spacing: float = 0.16, jitter: float = 0.03):
    rng = np.random.default_rng(seed)
    trench_x0, trench_x1 = 3.2, 5.2
    mud_y0, mud_y1 = -0.55, 0.55
    gravel_y0, gravel_y1 = 1.8, 3.0

    def outside_bridges(gx, gy):
        on_mud = (gy > mud_y0) & (gy < mud_y1)
        on_gravel = (gy > gravel_y0) & (gy < gravel_y1)
        return ~(on_mud | on_gravel)

    parts = [
        _patch(rng, 0.0, trench_x0, -3.0, 3.6, 0.0, GRASS, spacing, jitter),
        _patch(rng, trench_x1, 8.6, -3.0, 3.6, 0.0, GRASS, spacing, jitter),
        _patch(rng, trench_x0 + 0.1, trench_x1 - 0.1, -3.0, 3.6, -1.2, WATER,
               spacing, jitter, keep=outside_bridges),
        _patch(rng, trench_x0 - 0.2, trench_x1 + 0.2, mud_y0, mud_y1, 0.0, MUD,
               spacing, jitter),
        _patch(rng, trench_x0 - 0.2, trench_x1 + 0.2, gravel_y0, gravel_y1, 0.0,
               GRAVEL, spacing, jitter),
    ]
    return _bundle(parts, (0.8, 0.0, 0.0), (7.6, 0.0), 0.7)


def annulus_trap(seed: int = 0, spacing: float = 0.16, jitter: float = 0.03):
    rng = np.random.default_rng(seed)
    moat_r0, moat_r1 = 1.0, 2.2

    def radius_band(lo, hi):
        def keep(gx, gy):
            r = np.hypot(gx, gy)
            return (r >= lo) & (r < hi)
        return keep

    parts = [
        _patch(rng, -4.5, 4.5, -4.5, 4.5, 0.0, GRASS, spacing, jitter,
               keep=radius_band(0.0, moat_r0)),
        _patch(rng, -4.5, 4.5, -4.5, 4.5, 0.0, WATER, spacing, jitter,
               keep=radius_band(moat_r0, moat_r1)),
        _patch(rng, -4.5, 4.5, -4.5, 4.5, 0.0, GRASS, spacing, jitter,
               keep=radius_band(moat_r1, 4.5)),
    ]
    return _bundle(parts, (0.0, 0.0, 0.0), (3.5, 0.0), 0.6)


def inclined_field(seed: int = 0, spacing: float = 0.16, jitter: float = 0.03):
    rng = np.random.default_rng(seed)
    slope = 0.08

    def z(gx, gy):
        return slope * gx

    def off_strip(gx, gy):
        return ~((gx > 3.0) & (gx < 5.0) & (gy < 0.0))

    def on_strip(gx, gy):
        return (gx > 3.0) & (gx < 5.0) & (gy < 0.0)

    parts = [
        _patch(rng, 0.0, 8.0, -2.0, 2.0, z, GRASS, spacing, jitter, keep=off_strip),
        _patch(rng, 0.0, 8.0, -2.0, 2.0, z, MUD, spacing, jitter, keep=on_strip),
    ]
    return _bundle(parts, (0.5, 0.0, 0.0), (7.0, 0.0), 0.8, goal_z=slope * 7.0)


SCENE_GENERATORS = {
    "flat-corridor": flat_corridor,
    "two-bridges": two_bridges,
    "annulus-trap": annulus_trap,
    "inclined-field": inclined_field,
}


def generate_scene(name: str, seed: int = 0, spacing: float = 0.16,
                   jitter: float = 0.03) -> SceneBundle:
    if name not in SCENE_GENERATORS:
        raise ValueError(f"unknown scene {name!r}; choose from "
                         f"{sorted(SCENE_GENERATORS)}")
    return SCENE_GENERATORS[name](seed=seed, spacing=spacing, jitter=jitter)
