"""Pose and projection primitives.

Conventions used throughout the package:

- World frame: right-handed, +Y is the gravity axis and points down
  (so the image v axis and world gravity agree for an upright camera).
- Camera frame: +X right, +Y down, +Z forward (optical axis).
- A pose stores the world-to-camera map: ``x_cam = R @ x_world + t``.
  The camera center in world coordinates is ``p = -R.T @ t``.
- Homogeneous matrices are 4x4 row-major with last row (0, 0, 0, 1).
- Yaw is the rotation about the gravity axis. For a camera pose it is
  the azimuth of the forward axis f (camera +Z expressed in world):
  ``yaw = atan2(f_x, f_z)``. Pitch is in [-pi/2, pi/2], yaw and roll
  in (-pi, pi]. The factorization order is yaw o pitch o roll, i.e.
  ``R = R_Y(yaw) @ R_X(pitch) @ R_Z(roll)``; for a camera pose, pass
  the camera-to-world rotation so yaw follows the forward axis.

All arithmetic is float64. Rotations within ``ORTHONORMAL_TOL`` of
orthonormal are accepted as-is (bit-preserving); drift up to
``REORTHONORMALIZE_LIMIT`` (float32 upstream estimators land here) is
repaired by polar projection; anything worse is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateOrientationError, InvalidPoseError

# Orthonormality drift thresholds, measured as max |R^T R - I|.
ORTHONORMAL_TOL = 1e-9
REORTHONORMALIZE_LIMIT = 1e-4

# |pitch| within this of pi/2 makes yaw/roll inseparable.
GIMBAL_TOL = 1e-6

# Minimum forward component for a projectable camera-frame vector.
DEFAULT_EPS_Z = 1e-6

_EYE3 = np.eye(3)


def rotation_drift(rotation: np.ndarray) -> float:
    """Max-abs deviation of R^T R from the identity."""
    return float(np.abs(rotation.T @ rotation - _EYE3).max())


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) via polar projection."""
    u, _, vt = np.linalg.svd(rotation)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
    return u @ vt


def _checked_rotation(rotation: np.ndarray, what: str) -> np.ndarray:
    """Apply the drift policy; returns a matrix safe to store."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"{what}: rotation must be 3x3, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidPoseError(f"{what}: rotation has non-finite entries")
    drift = rotation_drift(r)
    if drift > REORTHONORMALIZE_LIMIT:
        raise InvalidPoseError(
            f"{what}: rotation drift {drift:.3e} exceeds limit {REORTHONORMALIZE_LIMIT:.0e}"
        )
    if drift > ORTHONORMAL_TOL:
        r = orthonormalize(r)
    if float(np.linalg.det(r)) <= 0.0:
        raise InvalidPoseError(f"{what}: rotation is a reflection (det <= 0)")
    return r


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, slots=True)
class CameraPose:
    """World-to-camera pose of one frame: ``x_cam = R @ x_world + t``."""

    frame_index: int
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")
        r = _checked_rotation(self.rotation, f"frame {self.frame_index}")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidPoseError(f"frame {self.frame_index}: non-finite translation")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def _trusted(cls, frame_index: int, rotation: np.ndarray, translation: np.ndarray) -> "CameraPose":
        # Internal fast path for rotations already validated in batch.
        # Callers must hand over read-only views of float64 arrays.
        self = object.__new__(cls)
        object.__setattr__(self, "frame_index", frame_index)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        return self

    @classmethod
    def from_matrix(cls, frame_index: int, matrix: np.ndarray, row_tol: float = 1e-9) -> "CameraPose":
        """Build from a 4x4 world-to-camera matrix; checks the last row."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > row_tol:
            raise InvalidPoseError(
                f"frame {frame_index}: last row {m[3].tolist()} is not (0, 0, 0, 1)"
            )
        return cls(frame_index, m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous world-to-camera matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, ``-R.T @ t``."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True, slots=True)
class RigidTransform:
    """A rigid map on world points: ``y = R @ x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _checked_rotation(self.rotation, "rigid transform")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points of shape (3,) or (n, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def invert_pose(pose: CameraPose) -> CameraPose:
    """Camera-to-world pose: rotation R.T, translation -R.T @ t."""
    rt = pose.rotation.T
    return CameraPose(pose.frame_index, rt, -rt @ pose.translation)


def invert_transform(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def camera_center(pose: CameraPose) -> np.ndarray:
    """World-space camera center of a world-to-camera pose."""
    return pose.center


def compose(a, b) -> RigidTransform:
    """Composition (a o b)(x) = a(b(x)) of rigid maps.

    Accepts any objects exposing ``rotation`` and ``translation``
    (CameraPose or RigidTransform); the result is returned as a plain
    RigidTransform.
    """
    rotation = a.rotation @ b.rotation
    translation = a.rotation @ b.translation + a.translation
    return RigidTransform(rotation, translation)


@dataclass(frozen=True, slots=True)
class GravityYpr:
    """Gravity-referenced yaw/pitch/roll, order yaw o pitch o roll."""

    yaw: float
    pitch: float
    roll: float

    def matrix(self) -> np.ndarray:
        return compose_gravity_ypr(self.yaw, self.pitch, self.roll)


def _wrap_pi(angle: float) -> float:
    # atan2 lands in [-pi, pi]; fold the single excluded endpoint.
    if angle == -math.pi:
        return math.pi
    return angle


def rotation_about_gravity(yaw: float) -> np.ndarray:
    """Rotation by ``yaw`` about the gravity (+Y) axis."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def compose_gravity_ypr(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R_Y(yaw) @ R_X(pitch) @ R_Z(roll)."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rx_rz = np.array(
        [
            [cr, -sr, 0.0],
            [cp * sr, cp * cr, -sp],
            [sp * sr, sp * cr, cp],
        ]
    )
    return rotation_about_gravity(yaw) @ rx_rz


def decompose_gravity_ypr(rotation: np.ndarray) -> GravityYpr:
    """Factor a rotation as R_Y(yaw) @ R_X(pitch) @ R_Z(roll).

    For a camera pose pass the camera-to-world rotation; yaw is then
    atan2(f_x, f_z) of the forward axis f. Raises
    DegenerateOrientationError when |pitch| is within GIMBAL_TOL of
    pi/2; the error carries the yaw under the roll = 0 convention.
    """
    m = _checked_rotation(rotation, "decompose_gravity_ypr")
    sp = min(1.0, max(-1.0, -float(m[1, 2])))
    pitch = math.asin(sp)
    if math.pi / 2.0 - abs(pitch) <= GIMBAL_TOL:
        # Rotation about Y and about Z collapse onto each other here.
        sign = 1.0 if sp > 0.0 else -1.0
        yaw = math.atan2(sign * float(m[0, 1]), float(m[0, 0]))
        raise DegenerateOrientationError(
            f"pitch {pitch:.9f} is at the gravity singularity",
            yaw=_wrap_pi(yaw),
            pitch=sign * math.pi / 2.0,
        )
    yaw = math.atan2(float(m[0, 2]), float(m[2, 2]))
    roll = math.atan2(float(m[1, 0]), float(m[1, 1]))
    return GravityYpr(_wrap_pi(yaw), pitch, _wrap_pi(roll))


def rotation_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    cos_theta = (float(np.trace(a @ b.T)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, cos_theta)))


@dataclass(frozen=True, slots=True)
class Intrinsics:
    """Pinhole intrinsics; width/height in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for key in ("fx", "fy", "cx", "cy"):
            value = getattr(self, key)
            if not math.isfinite(value):
                raise ConfigError(key, f"must be finite, got {value}")
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("fx" if self.fx <= 0 else "fy", "focal length must be > 0")
        if self.width < 1 or self.height < 1:
            raise ConfigError("width" if self.width < 1 else "height", "must be >= 1")

    @property
    def K(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array(
            [
                [self.fx, 0.0, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )

    def scaled(self, divisor: int) -> "Intrinsics":
        """Intrinsics of the same camera rendered at 1/divisor scale."""
        if divisor < 1:
            raise ConfigError("map_scale", f"must be >= 1, got {divisor}")
        return Intrinsics(
            fx=self.fx / divisor,
            fy=self.fy / divisor,
            cx=self.cx / divisor,
            cy=self.cy / divisor,
            width=max(1, self.width // divisor),
            height=max(1, self.height // divisor),
        )


def project_pinhole(v: np.ndarray, k: Intrinsics, eps_z: float = DEFAULT_EPS_Z,
                    allow_negative: bool = False):
    """Project a camera-frame vector to pixel coordinates.

    Returns (u, v) floats, or None when the forward component is too
    small to project (v_z <= eps_z; with allow_negative, |v_z| <= eps_z).
    The result is not clipped to the image bounds.
    """
    vec = np.asarray(v, dtype=np.float64).reshape(3)
    vz = float(vec[2])
    if allow_negative:
        if abs(vz) <= eps_z:
            return None
    elif vz <= eps_z:
        return None
    return (
        k.cx + k.fx * (float(vec[0]) / vz),
        k.cy + k.fy * (float(vec[1]) / vz),
    )


def project_pinhole_many(vs: np.ndarray, k: Intrinsics, eps_z: float = DEFAULT_EPS_Z,
                         allow_negative: bool = False):
    """Vectorized project_pinhole.

    Returns (uv, valid): uv is (n, 2) with NaN rows where valid is
    False. Matches the scalar routine bit for bit on valid rows.
    """
    v = np.asarray(vs, dtype=np.float64).reshape(-1, 3)
    vz = v[:, 2]
    valid = (np.abs(vz) > eps_z) if allow_negative else (vz > eps_z)
    uv = np.full((v.shape[0], 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv[:, 0] = k.cx + k.fx * (v[:, 0] / vz)
        uv[:, 1] = k.cy + k.fy * (v[:, 1] / vz)
    uv[~valid] = np.nan
    return uv, valid
