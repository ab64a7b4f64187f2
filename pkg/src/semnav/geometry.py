"""Rigid 6D poses and pinhole camera geometry.

Conventions used throughout the package:

* map frame: z up, right-handed.
* robot frame: x forward (heading), z up when on flat ground.
* camera frame: x right, y down, z forward (optical axis); a camera pose
  transforms camera-frame coordinates into the map frame.
* Euler angles are ZYX (yaw, pitch, roll).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Pose6D:
    """A rigid transform: ``p_map = rotation @ p_local + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("Pose6D expects a 3x3 rotation and a 3-vector translation")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def validate(self, tol: float = ORTHONORMAL_TOL) -> None:
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > tol:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.3e})")
        if abs(np.linalg.det(self.rotation) - 1.0) > tol:
            raise ValueError("rotation determinant != +1")

    @property
    def position(self) -> np.ndarray:
        return self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: "Pose6D") -> "Pose6D":
        return Pose6D(self.rotation @ other.rotation,
                      self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose6D":
        Rt = self.rotation.T
        return Pose6D(Rt, -Rt @ self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to one point (3,) or a batch (n, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def transform_inverse(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation

    def reorthonormalized(self) -> "Pose6D":
        """Snap the rotation back onto SO(3) (nearest via SVD)."""
        U, _, Vt = np.linalg.svd(self.rotation)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            U[:, -1] = -U[:, -1]
            R = U @ Vt
        return Pose6D(R, self.translation)

    @property
    def heading(self) -> np.ndarray:
        """Unit x-axis of the pose (the robot's forward direction)."""
        return self.rotation[:, 0]

    @property
    def up(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    @property
    def pitch(self) -> float:
        return math.asin(-np.clip(self.rotation[2, 0], -1.0, 1.0))

    @property
    def roll(self) -> float:
        return math.atan2(self.rotation[2, 1], self.rotation[2, 2])

    @staticmethod
    def identity() -> "Pose6D":
        return Pose6D(np.eye(3), np.zeros(3))

    @staticmethod
    def from_xyz_yaw(x: float, y: float, z: float, yaw: float) -> "Pose6D":
        return Pose6D(rot_z(yaw), np.array([x, y, z], dtype=np.float64))

    @staticmethod
    def from_axes(x_axis: np.ndarray, z_axis: np.ndarray,
                  position: np.ndarray) -> "Pose6D":
        """Build a pose from orthonormal x and z axes (y completes RH frame)."""
        x = np.asarray(x_axis, dtype=np.float64)
        z = np.asarray(z_axis, dtype=np.float64)
        y = np.cross(z, x)
        R = np.column_stack([x, y, z])
        return Pose6D(R, np.asarray(position, dtype=np.float64))


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class CameraModel:
    """Square-pixel pinhole camera; principal point at the image center."""

    width: int
    height: int
    fov_deg: float = 70.0
    intrinsics: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2")
        if not 1.0 <= self.fov_deg < 180.0:
            raise ValueError("fov_deg must lie in [1, 180)")
        f = (self.width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)
        K = np.array([
            [f, 0.0, (self.width - 1) / 2.0],
            [0.0, f, (self.height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ])
        object.__setattr__(self, "intrinsics", K)


def camera_pose(position: np.ndarray, yaw: float, pitch_down: float) -> Pose6D:
    """Camera-to-map pose looking along `yaw`, tilted `pitch_down` below horizontal."""
    cp = math.cos(pitch_down)
    forward = np.array([math.cos(yaw) * cp, math.sin(yaw) * cp, -math.sin(pitch_down)])
    up_world = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up_world)
    n = np.linalg.norm(right)
    if n < 1e-12:  # looking straight up/down; pick an arbitrary right
        right = np.array([math.cos(yaw + math.pi / 2), math.sin(yaw + math.pi / 2), 0.0])
    else:
        right = right / n
    down = np.cross(forward, right)
    R = np.column_stack([right, down, forward])
    return Pose6D(R, np.asarray(position, dtype=np.float64))


def camera_pose_from_robot(robot: Pose6D, height: float, pitch_down: float) -> Pose6D:
    """Mount a camera `height` above a terrain-attached robot pose."""
    position = robot.position + np.array([0.0, 0.0, height])
    return camera_pose(position, robot.yaw, pitch_down)
