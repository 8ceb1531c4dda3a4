"""Rigid camera poses (camera-to-world) and relative poses between views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .erp import DomainError


def _check_rotation(R: np.ndarray, tol: float, what: str) -> None:
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise DomainError(f"{what} must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise DomainError(f"{what} is not a proper rotation (tolerance {tol:g})")


@dataclass(frozen=True)
class Pose:
    """Camera-to-world transform: ``X_world = R @ X_cam + t``.

    ``t`` is the camera center in world coordinates, in meters.
    """

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        _check_rotation(R, 1e-6, "pose rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise DomainError(f"pose matrix must be 4x4, got {m.shape}")
        if np.abs(m[3] - [0, 0, 0, 1]).max() > 1e-6:
            raise DomainError("pose matrix bottom row must be [0, 0, 0, 1]")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    def world_to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p - self.t) @ self.R

    def camera_to_world(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.R.T + self.t


@dataclass(frozen=True)
class RelativePose:
    """Maps view-i camera coordinates into view-j camera coordinates: ``p' = R p + T``."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        _check_rotation(R, 1e-6, "relative rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.T

    def inverse(self) -> "RelativePose":
        return RelativePose(self.R.T, -self.R.T @ self.T)

    def then(self, other: "RelativePose") -> "RelativePose":
        """Apply ``self`` and then ``other``."""
        return RelativePose(other.R @ self.R, other.R @ self.T + other.T)


def relative_pose(pose_i: Pose, pose_j: Pose) -> RelativePose:
    """Relative pose taking camera-i coordinates to camera-j coordinates."""
    return RelativePose(pose_j.R.T @ pose_i.R, pose_j.R.T @ (pose_i.t - pose_j.t))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()
