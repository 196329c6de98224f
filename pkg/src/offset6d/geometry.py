"""Pin-hole camera math and rigid transforms.

Coordinate conventions used everywhere in this package:

Camera frame (right-handed, standard computer vision):
  - origin at the optical center
  - x right, y down, z forward along the optical axis
  - ``d`` is the z-coordinate (the depth-image value), not the ray length

Object frame:
  - attached to the object model; points are ``(a, b, c)`` in meters

Image frame:
  - ``u`` is the pixel column, ``v`` the pixel row, origin at the top-left

A pose ``(R, t)`` maps object-frame points to camera-frame points:
``[x, y, d]^T = R [a, b, c]^T + t``.  All positions are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidDepthError

# Orthonormality drift accepted silently / repaired by SVD projection / rejected.
ROTATION_TOLERANCE = 1e-9
ROTATION_REPAIR_LIMIT = 1e-6


class CamPoint(NamedTuple):
    """Camera-frame point; ``d`` is depth along the optical axis (meters)."""

    x: float
    y: float
    d: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.d], dtype=np.float64)


class ObjPoint(NamedTuple):
    """Object-frame point (meters)."""

    a: float
    b: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=np.float64)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pin-hole parameters in pixels: focal lengths and principal point."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"intrinsics.{name} must be finite, got {value!r}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


def rotation_defect(matrix: np.ndarray) -> float:
    """How far ``matrix`` is from SO(3): max of Frobenius orthonormality
    residual and determinant deviation from +1."""
    m = np.asarray(matrix, dtype=np.float64)
    ortho = np.linalg.norm(m.T @ m - np.eye(3))
    return max(ortho, abs(np.linalg.det(m) - 1.0))


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix to the nearest rotation (Frobenius sense).

    SVD with a determinant sign fix so the result is proper (det +1),
    never a reflection.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got shape {m.shape}")
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _read_only(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RigidPose:
    """Rotation matrix and translation vector, object frame -> camera frame.

    The rotation must be orthonormal with det +1 to within 1e-9 (Frobenius).
    Inputs off by at most 1e-6 are repaired by projection to the nearest
    rotation; anything worse is rejected.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got shape {t.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("pose entries must be finite")
        defect = rotation_defect(r)
        if defect > ROTATION_TOLERANCE:
            if defect > ROTATION_REPAIR_LIMIT:
                raise ValueError(
                    f"rotation is not orthonormal (defect {defect:.3e} exceeds "
                    f"repair limit {ROTATION_REPAIR_LIMIT:.0e})"
                )
            r = nearest_rotation(r)
        object.__setattr__(self, "rotation", _read_only(r))
        object.__setattr__(self, "translation", _read_only(t))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_quaternion(w: float, x: float, y: float, z: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        """Construction helper; the canonical representation stays the matrix."""
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError("quaternion must be nonzero and finite")
        w, x, y, z = w / norm, x / norm, y / norm, z / norm
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        return RigidPose(r, np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        half = 0.5 * angle
        w = math.cos(half)
        xyz = axis / n * math.sin(half)
        return RigidPose.from_quaternion(w, *xyz, translation=translation)


def backproject(u: float, v: float, d: float, k: CameraIntrinsics) -> CamPoint:
    """Lift pixel (u, v) with depth d to the camera frame.

    x = (u - cx) / fx * d,  y = (v - cy) / fy * d,  z = d.
    """
    if not (math.isfinite(d) and d > 0):
        raise InvalidDepthError(f"depth must be positive and finite, got {d!r}")
    return CamPoint((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d)


def backproject_pixels(us, vs, ds, k: CameraIntrinsics) -> np.ndarray:
    """Vectorized :func:`backproject`; returns an (N, 3) array."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    ds = np.asarray(ds, dtype=np.float64)
    if not (np.all(np.isfinite(ds)) and np.all(ds > 0)):
        raise InvalidDepthError("all depths must be positive and finite")
    return np.stack([(us - k.cx) / k.fx * ds, (vs - k.cy) / k.fy * ds, ds], axis=-1)


def project(p, k: CameraIntrinsics) -> tuple[float, float]:
    """Project a camera-frame point to continuous pixel coordinates (u, v)."""
    x, y, d = (p.x, p.y, p.d) if isinstance(p, CamPoint) else tuple(np.asarray(p, dtype=np.float64))
    if not (math.isfinite(d) and d > 0):
        raise InvalidDepthError(f"depth must be positive and finite, got {d!r}")
    return (k.fx * x / d + k.cx, k.fy * y / d + k.cy)


def project_points(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Vectorized :func:`project`; (N, 3) camera points -> (N, 2) pixels."""
    pts = np.asarray(points, dtype=np.float64)
    d = pts[..., 2]
    if not (np.all(np.isfinite(d)) and np.all(d > 0)):
        raise InvalidDepthError("all depths must be positive and finite")
    return np.stack([k.fx * pts[..., 0] / d + k.cx, k.fy * pts[..., 1] / d + k.cy], axis=-1)


def transform(pose: RigidPose, p: ObjPoint) -> CamPoint:
    """Map an object-frame point into the camera frame: R p + t."""
    v = pose.rotation @ p.as_array() + pose.translation
    return CamPoint(v[0], v[1], v[2])


def transform_points(pose: RigidPose, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts @ pose.rotation.T + pose.translation


def inverse_transform(pose: RigidPose, q: CamPoint) -> ObjPoint:
    """Map a camera-frame point back to the object frame: R^T (q - t)."""
    v = pose.rotation.T @ (q.as_array() - pose.translation)
    return ObjPoint(v[0], v[1], v[2])


def inverse_transform_points(pose: RigidPose, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return (pts - pose.translation) @ pose.rotation


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """Pose composition: (compose(a, b))(p) = a(b(p)).

    The constructor re-orthonormalizes when accumulated drift exceeds 1e-9.
    """
    return RigidPose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(a: RigidPose) -> RigidPose:
    return RigidPose(a.rotation.T, -(a.rotation.T @ a.translation))
