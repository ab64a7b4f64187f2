"""Terrain-attached poses and planar motion primitives.

A trajectory node is a 6D pose snapped onto the point-cloud surface, with a
static traversability score in [0, 1] and the set of surface points the
robot would stand on (its support set). Motion between nodes follows short
planar segments whose curvature is a cubic polynomial in arc length,
integrated in the plane of the node and re-attached to the terrain at the
far end.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose6D, wrap_angle
from .semantic_cloud import SemanticPointCloud

CURVATURE_TOL = 1e-12
INTEGRATION_STEPS = 100  # fixed step h = L / 100


@dataclass(frozen=True)
class TraversabilityParams:
    max_roll: float = 0.35
    max_pitch: float = 0.35
    max_residual: float = 0.12
    support_size: int = 20
    max_snap: float = 1.0  # largest vertical adjustment a projection may make
    max_support_distance: float = 0.6  # nearest support point farther away = mid-air

    def __post_init__(self):
        if min(self.max_roll, self.max_pitch, self.max_residual, self.max_snap,
               self.max_support_distance) <= 0:
            raise ValueError("bounds must be positive")
        if self.support_size < 3:
            raise ValueError("support_size must be >= 3")


@dataclass(frozen=True)
class MotionPrimitive:
    """kappa(s) = a + b s + c s^2 + d s^3 over s in [0, length]."""

    a: float
    b: float
    c: float
    d: float
    length: float
    reverse: bool = False
    kappa_bound: float = math.inf

    def __post_init__(self):
        if not self.length > 0.0:
            raise ValueError("primitive length must be > 0")

    def kappa(self, s):
        return self.a + s * (self.b + s * (self.c + s * self.d))

    def max_abs_kappa(self) -> float:
        """Exact max of |kappa| on [0, L] via the derivative's roots."""
        candidates = [0.0, self.length]
        # kappa'(s) = b + 2 c s + 3 d s^2
        if abs(self.d) > 0.0:
            disc = 4 * self.c**2 - 12 * self.d * self.b
            if disc >= 0.0:
                r = math.sqrt(disc)
                for root in ((-2 * self.c + r) / (6 * self.d),
                             (-2 * self.c - r) / (6 * self.d)):
                    if 0.0 < root < self.length:
                        candidates.append(root)
        elif abs(self.c) > 0.0:
            root = -self.b / (2 * self.c)
            if 0.0 < root < self.length:
                candidates.append(root)
        return max(abs(self.kappa(s)) for s in candidates)


def linear_primitive(kappa_start: float, kappa_target: float, length: float,
                     kappa_bound: float, reverse: bool = False) -> MotionPrimitive:
    """Curvature ramps linearly from kappa_start to kappa_target over `length`."""
    return MotionPrimitive(a=kappa_start, b=(kappa_target - kappa_start) / length,
                           c=0.0, d=0.0, length=length, reverse=reverse,
                           kappa_bound=kappa_bound)


def primitive_library(kappa_start: float, kappa_max: float,
                      length: float) -> list:
    """Seven expansion primitives: five forward curvature targets plus two
    straightening reverse variants at full and half length."""
    targets = (-kappa_max, -kappa_max / 2.0, 0.0, kappa_max / 2.0, kappa_max)
    prims = [linear_primitive(kappa_start, t, length, kappa_max) for t in targets]
    prims.append(linear_primitive(kappa_start, 0.0, length, kappa_max, reverse=True))
    prims.append(linear_primitive(kappa_start, 0.0, length / 2.0, kappa_max, reverse=True))
    return prims


def integrate_primitive(start_planar_pose, primitive: MotionPrimitive):
    """Integrate the planar motion of a primitive with classic RK4.

    `start_planar_pose` is (x, y, heading, kappa0); the primitive's `a`
    coefficient must equal kappa0 so curvature is continuous at the joint.
    Returns ((x_end, y_end, heading_end), kappa_end). Reverse primitives
    integrate the time-reversed flow (the robot backs along the segment).
    """
    x, y, theta, kappa0 = start_planar_pose
    if abs(primitive.a - kappa0) > CURVATURE_TOL:
        raise ValueError("primitive start curvature does not match the node curvature")
    if primitive.max_abs_kappa() > primitive.kappa_bound + CURVATURE_TOL:
        raise ValueError("curvature bound violated on the segment")

    sgn = -1.0 if primitive.reverse else 1.0
    L = primitive.length
    h = L / INTEGRATION_STEPS
    kappa = primitive.kappa
    s = 0.0
    for _ in range(INTEGRATION_STEPS):
        # derivatives: x' = sgn cos(theta), y' = sgn sin(theta), theta' = sgn kappa(s)
        k1t = kappa(s)
        k1x, k1y = math.cos(theta), math.sin(theta)
        th2 = theta + sgn * 0.5 * h * k1t
        k2t = kappa(s + 0.5 * h)
        k2x, k2y = math.cos(th2), math.sin(th2)
        th3 = theta + sgn * 0.5 * h * k2t
        k3t = kappa(s + 0.5 * h)
        k3x, k3y = math.cos(th3), math.sin(th3)
        th4 = theta + sgn * h * k3t
        k4t = kappa(s + h)
        k4x, k4y = math.cos(th4), math.sin(th4)
        x += sgn * h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y += sgn * h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        theta += sgn * h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
        s += h
    return (x, y, theta), primitive.kappa(L)


@dataclass
class TrajectoryNode:
    """Terrain-attached pose plus the data the planners need at it."""

    pose: Pose6D
    tau: float
    kappa: float
    support: np.ndarray            # indices of the K nearest surface points
    outgoing: MotionPrimitive | None = None
    fit_residual: float = 0.0


def _fit_plane(points: np.ndarray):
    """Least-squares plane through `points`.

    Returns (centroid, unit normal oriented toward +z, rms residual, ok);
    ok is False when the neighborhood is degenerate (rank < 2, i.e. the
    points are collinear or coincident).
    """
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] <= 1e-12 + 1e-9 * s[0]:
        return centroid, None, math.inf, False
    normal = vt[2]
    if normal[2] < 0.0:
        normal = -normal
    rms = s[2] / math.sqrt(len(points))
    return centroid, normal, rms, True


def _attach(cloud: SemanticPointCloud, position: np.ndarray,
            heading_dir: np.ndarray, params: TraversabilityParams,
            fallback_dir: np.ndarray | None = None):
    """Snap a position+heading onto the local terrain plane.

    Returns (pose, support_indices, rms) or None when the local plane fit is
    degenerate, near-vertical, further than max_snap away, or the heading
    cannot be projected into it.
    """
    k = min(params.support_size, len(cloud))
    _, idx = cloud.knn(position, k)
    idx = np.atleast_1d(idx)
    # horizontal gap to the nearest support point: a large one means the
    # pose hangs past an edge (vertical offsets are governed by max_snap)
    gap = np.linalg.norm(cloud.positions[idx] - position, axis=1)
    horizontal = np.linalg.norm((cloud.positions[idx] - position)[:, :2], axis=1)
    if horizontal[int(np.argmin(gap))] > params.max_support_distance:
        return None
    centroid, normal, rms, ok = _fit_plane(cloud.positions[idx])
    if not ok or abs(normal[2]) < 1e-6:
        return None
    x, y, z_in = position
    z_new = centroid[2] - (normal[0] * (x - centroid[0]) + normal[1] * (y - centroid[1])) / normal[2]
    if abs(z_new - z_in) > params.max_snap:
        return None
    snapped = np.array([x, y, z_new])

    for direction in (heading_dir, fallback_dir):
        if direction is None:
            continue
        in_plane = direction - np.dot(direction, normal) * normal
        norm = np.linalg.norm(in_plane)
        if norm > 1e-9:
            x_axis = in_plane / norm
            pose = Pose6D.from_axes(x_axis, normal, snapped)
            return pose, idx, rms
    return None


def project_to_surface(cloud: SemanticPointCloud, pose: Pose6D,
                       params: TraversabilityParams,
                       fallback_dir: np.ndarray | None = None):
    """Terrain projection: returns (attached pose, support indices) or None."""
    result = _attach(cloud, pose.position, pose.heading, params, fallback_dir)
    if result is None:
        return None
    attached, idx, _ = result
    return attached, idx


def _tau(roll: float, pitch: float, residual: float,
         params: TraversabilityParams) -> float:
    if (abs(roll) > params.max_roll or abs(pitch) > params.max_pitch
            or residual > params.max_residual):
        return 0.0
    return ((1.0 - abs(roll) / params.max_roll)
            * (1.0 - abs(pitch) / params.max_pitch)
            * (1.0 - residual / params.max_residual))


def traversability(pose: Pose6D, support: np.ndarray, cloud: SemanticPointCloud,
                   params: TraversabilityParams) -> float:
    """Static traversability in [0, 1] at a terrain-attached pose."""
    _, _, rms, ok = _fit_plane(cloud.positions[np.atleast_1d(support)])
    if not ok:
        return 0.0
    return _tau(pose.roll, pose.pitch, rms, params)


def make_node(cloud: SemanticPointCloud, position: np.ndarray, heading_dir: np.ndarray,
              kappa: float, params: TraversabilityParams,
              fallback_dir: np.ndarray | None = None) -> TrajectoryNode | None:
    """Attach a pose and build its node; None unless tau > 0."""
    result = _attach(cloud, position, heading_dir, params, fallback_dir)
    if result is None:
        return None
    pose, idx, rms = result
    tau = _tau(pose.roll, pose.pitch, rms, params)
    if tau <= 0.0:
        return None
    return TrajectoryNode(pose=pose, tau=tau, kappa=kappa, support=idx,
                          fit_residual=rms)


def extend(node: TrajectoryNode, primitive: MotionPrimitive,
           cloud: SemanticPointCloud, params: TraversabilityParams) -> TrajectoryNode | None:
    """Grow one segment from `node`; None when rejected.

    Rejection reasons: start-curvature mismatch, curvature bound violation,
    failed terrain projection at the endpoint, or tau = 0 there.
    """
    try:
        (lx, ly, ltheta), kappa_end = integrate_primitive(
            (0.0, 0.0, 0.0, node.kappa), primitive)
    except ValueError:
        return None
    position = node.pose.transform(np.array([lx, ly, 0.0]))
    heading_dir = node.pose.rotation @ np.array([math.cos(ltheta), math.sin(ltheta), 0.0])
    child = make_node(cloud, position, heading_dir, kappa_end, params,
                      fallback_dir=node.pose.heading)
    return child


def export_path_csv(nodes, path) -> None:
    """Write a node chain as CSV: index, x, y, z, roll, pitch, yaw, tau, kappa."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_index", "x", "y", "z", "roll", "pitch", "yaw",
                         "tau", "kappa"])
        for i, n in enumerate(nodes):
            x, y, z = n.pose.position
            writer.writerow([i, f"{x:.9g}", f"{y:.9g}", f"{z:.9g}",
                             f"{n.pose.roll:.9g}", f"{n.pose.pitch:.9g}",
                             f"{n.pose.yaw:.9g}", f"{n.tau:.9g}", f"{n.kappa:.9g}"])


def solve_connection(kappa_start: float, target_xy_theta_kappa,
                     kappa_max: float) -> MotionPrimitive | None:
    """Two-point boundary-value steering in the plane.

    Finds a forward cubic-curvature segment from the origin pose
    (0, 0, heading 0, curvature kappa_start) to the target planar pose
    (x, y, theta, kappa). The cubic's d coefficient is eliminated so the end
    curvature matches exactly; Newton iterations on (b, c, L) drive the
    endpoint position/heading error below 1e-10. Returns None when the
    iteration fails to converge or the segment violates the curvature bound.
    """
    tx, ty, ttheta, tkappa = target_xy_theta_kappa
    dist = math.hypot(tx, ty)
    if dist < 1e-6:
        return None

    def residual(q):
        b, c, L = q
        if L <= 1e-3:
            return None
        d = (tkappa - kappa_start - b * L - c * L * L) / L**3
        prim = MotionPrimitive(kappa_start, b, c, d, L, kappa_bound=math.inf)
        (x, y, theta), _ = integrate_primitive((0.0, 0.0, 0.0, kappa_start), prim)
        return np.array([x - tx, y - ty, wrap_angle(theta - ttheta)]), prim

    q = np.array([(tkappa - kappa_start) / max(dist, 0.2), 0.0, max(dist, 0.2)])
    for _ in range(25):
        res = residual(q)
        if res is None:
            return None
        g, prim = res
        if np.abs(g).max() < 1e-10:
            if prim.max_abs_kappa() > kappa_max + CURVATURE_TOL or prim.length > 4.0 * dist:
                return None
            return MotionPrimitive(prim.a, prim.b, prim.c, prim.d, prim.length,
                                   kappa_bound=kappa_max)
        # finite-difference Jacobian
        J = np.zeros((3, 3))
        for col in range(3):
            dq = np.zeros(3)
            dq[col] = 1e-7 * max(1.0, abs(q[col]))
            res_p = residual(q + dq)
            if res_p is None:
                return None
            J[:, col] = (res_p[0] - g) / dq[col]
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            return None
        step = np.clip(step, -1.0, 1.0)
        q = q + step
    return None
