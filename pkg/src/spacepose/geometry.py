"""Pose, quaternion and camera types plus the projection/lifting kernels.

Conventions used throughout the package:

* ``Pose.rotation`` maps target-frame vectors to camera-frame vectors, so a
  model point ``P`` lands in the camera frame at ``X = rotation @ P +
  translation``.  Label files that store the transpose convention must be
  transposed on ingest.
* Quaternions are unit, scalar-first ``(w, x, y, z)``, Hamilton convention.
* Pixels are ``(u, v)`` with ``u`` along image columns and ``v`` along rows.
* An ideal pinhole is assumed; inputs are expected to be undistorted.

All operations are pure functions of their inputs and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    NonPositiveDepth,
    NotARotation,
)

MIN_DEPTH = 1e-9
ROTATION_TOL = 1e-9
QUAT_NORM_TOL = 1e-9


def _as_array(x, shape: tuple[int, ...], name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def _check_rotation(m: np.ndarray, tol: float) -> None:
    if not np.all(np.isfinite(m)):
        raise NotARotation("rotation contains non-finite entries")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err > tol:
        raise NotARotation(f"R^T R deviates from identity by {err:.3e}")
    det = np.linalg.det(m)
    if abs(det - 1.0) > tol:
        raise NotARotation(f"det(R) = {det:.12f}, expected +1")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Ideal pinhole camera: focal lengths, principal point and image size.

    All quantities are in pixels.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width):
            raise ValueError("cx must lie inside the image width")
        if not (0 < self.cy < self.height):
            raise ValueError("cy must lie inside the image height")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix ``K``."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar-first, Hamilton convention."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {n!r} deviates from 1")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)


@dataclass(frozen=True)
class Pose:
    """Rigid transform of the target frame w.r.t. the camera frame.

    ``rotation`` (3x3, orthonormal, det +1) maps target-frame vectors to
    camera-frame vectors; ``translation`` (metres) is the target origin
    expressed in the camera frame.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _as_array(self.rotation, (3, 3), "rotation")
        t = _as_array(self.translation, (3,), "translation")
        _check_rotation(r, ROTATION_TOL)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q: Quaternion, translation) -> "Pose":
        return cls(quat_to_matrix(q), translation)

    @property
    def quaternion(self) -> Quaternion:
        """Quaternion view of the rotation (representative with w >= 0)."""
        return matrix_to_quat(self.rotation)

    def transform(self, points) -> np.ndarray:
        """Map target-frame points (n, 3) into the camera frame."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return p @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class KeypointModel:
    """The 11 canonical 3D keypoints of the target, metres, target frame."""

    points: np.ndarray = field()

    NUM_POINTS = 11
    COPLANARITY_TOL = 1e-6

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.shape != (self.NUM_POINTS, 3):
            raise ValueError(
                f"keypoint model must hold exactly {self.NUM_POINTS} 3D points"
            )
        diff = p[:, None, :] - p[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 0.0:
            raise ValueError("keypoints must be pairwise distinct")
        centered = p - p.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        if s[0] <= 0 or s[-1] / s[0] < self.COPLANARITY_TOL:
            raise ValueError("keypoints are coplanar within tolerance")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)


def project(points, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """Project target-frame points to pixel coordinates.

    Args:
        points: (n, 3) target-frame points, metres.
        pose: target-to-camera transform.
        cam: pinhole intrinsics.

    Returns:
        (n, 2) pixel coordinates, input order preserved.

    Raises:
        NonPositiveDepth: when any point is at or behind the camera plane.
    """
    x = pose.transform(points)
    z = x[:, 2]
    bad = np.nonzero(z <= MIN_DEPTH)[0]
    if bad.size:
        raise NonPositiveDepth(int(bad[0]), float(z[bad[0]]))
    u = cam.fx * x[:, 0] / z + cam.cx
    v = cam.fy * x[:, 1] / z + cam.cy
    return np.stack([u, v], axis=1)


def camera_depths(points, pose: Pose) -> np.ndarray:
    """Camera-frame z of target-frame points (the depths ``lift`` inverts)."""
    return pose.transform(points)[:, 2]


def lift(pixels, depths, cam: CameraIntrinsics) -> np.ndarray:
    """Back-project pixels with known depths into camera-frame 3D points.

    Right-inverse of the camera-frame projection: ``lift(project(X), X.z)``
    reproduces ``X``.

    Raises:
        NonPositiveDepth: when any depth is <= 0.
    """
    p = np.atleast_2d(np.asarray(pixels, dtype=float))
    d = np.atleast_1d(np.asarray(depths, dtype=float))
    if p.shape[0] != d.shape[0]:
        raise ValueError("pixels and depths must have the same length")
    bad = np.nonzero(d <= 0.0)[0]
    if bad.size:
        raise NonPositiveDepth(int(bad[0]), float(d[bad[0]]))
    x = (p[:, 0] - cam.cx) / cam.fx
    y = (p[:, 1] - cam.cy) / cam.fy
    return np.stack([d * x, d * y, d], axis=1)


def quat_to_matrix(q: Quaternion) -> np.ndarray:
    """Rotation matrix of a unit quaternion (scalar-first, Hamilton)."""
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m) -> Quaternion:
    """Quaternion of a rotation matrix; returns the representative with w >= 0.

    Uses the Shepperd branch selection for numerical stability.

    Raises:
        NotARotation: when the matrix fails the orthonormality or determinant
            check beyond 1e-6.
    """
    r = _as_array(m, (3, 3), "matrix")
    _check_rotation(r, 1e-6)
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0:
        s = 2.0 * math.sqrt(trace + 1.0)
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    return Quaternion(w, x, y, z)


def pose_inverse(pose: Pose) -> Pose:
    """Inverse transform: maps camera-frame vectors back to the target frame."""
    rt = pose.rotation.T
    return Pose(rt, -rt @ pose.translation)


def orthonormalize(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) to ``m`` via SVD.

    Raises:
        DegenerateConfiguration: when ``m`` is rank-deficient.
    """
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float))
    if s[-1] <= 0:
        raise DegenerateConfiguration("matrix is rank-deficient")
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def random_quaternion(rng: np.random.Generator) -> Quaternion:
    """Uniform random unit quaternion (subgroup algorithm)."""
    u1, u2, u3 = rng.uniform(size=3)
    a = math.sqrt(1.0 - u1)
    b = math.sqrt(u1)
    x = a * math.sin(2 * math.pi * u2)
    y = a * math.cos(2 * math.pi * u2)
    z = b * math.sin(2 * math.pi * u3)
    w = b * math.cos(2 * math.pi * u3)
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    return Quaternion(w, x, y, z)
