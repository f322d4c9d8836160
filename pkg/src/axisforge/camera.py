"""Pinhole camera model, tri-axis forward projection, and rotation helpers.

Conventions (standard computer vision):
    camera frame  - X right, Y down, Z forward along the optical axis
    image frame   - u right, v down, in pixels; pixel (col j, row i) has
                    center at (u, v) = (j, i)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAxis, NonPositiveDepth

DEPTH_EPS = 1e-9
AXIS_DEGENERACY_PX = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters. The matrix K is upper triangular with positive diagonal."""

    f_x: float
    f_y: float
    c_x: float
    c_y: float
    width: int
    height: int
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.f_x > 0 and self.f_y > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [
                [self.f_x, self.gamma, self.c_x],
                [0.0, self.f_y, self.c_y],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    def to_dict(self) -> dict:
        return {
            "f_x": self.f_x,
            "f_y": self.f_y,
            "gamma": self.gamma,
            "c_x": self.c_x,
            "c_y": self.c_y,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            f_x=float(d["f_x"]),
            f_y=float(d["f_y"]),
            gamma=float(d.get("gamma", 0.0)),
            c_x=float(d["c_x"]),
            c_y=float(d["c_y"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform from object frame to camera frame: x_cam = R @ x_obj + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        T = np.asarray(self.T, dtype=float).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-9:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R is not a proper rotation")


@dataclass(frozen=True)
class Omega:
    """Symmetric positive-definite conic matrix used by the orthogonality system."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "m", m)
        if m.shape != (3, 3):
            raise ValueError("omega must be 3x3")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise ValueError("omega must be symmetric")
        if np.min(np.linalg.eigvalsh(m)) <= 0:
            raise ValueError("omega must be positive definite")


@dataclass(frozen=True)
class AxisLines:
    """Directed image of the object's tri-axis.

    origin_px : image of the object origin
    dir       : (3, 2) unit vectors pointing from the origin toward each
                projected axis endpoint (X, Y, Z order)
    slope     : dy/dx per axis; +inf for vertical lines
    """

    origin_px: np.ndarray
    dir: np.ndarray
    slope: tuple = field(init=False)

    def __post_init__(self):
        origin = np.asarray(self.origin_px, dtype=float).reshape(2)
        d = np.asarray(self.dir, dtype=float).reshape(3, 2)
        object.__setattr__(self, "origin_px", origin)
        object.__setattr__(self, "dir", d)
        norms = np.linalg.norm(d, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("axis directions must be unit vectors")
        slopes = tuple(
            v[1] / v[0] if abs(v[0]) > 1e-12 else math.inf for v in d
        )
        object.__setattr__(self, "slope", slopes)


def project_point(K: CameraIntrinsics, pose: Pose, X_obj) -> np.ndarray:
    """Project an object-frame point to pixel coordinates."""
    Xc = pose.R @ np.asarray(X_obj, dtype=float).reshape(3) + pose.T
    if Xc[2] <= DEPTH_EPS:
        raise NonPositiveDepth(f"transformed depth {Xc[2]:.3g} <= {DEPTH_EPS}")
    h = K.K @ Xc
    return h[:2] / h[2]


def compute_omega(K: CameraIntrinsics) -> Omega:
    """Conic matrix K^-T K^-1: lets ray angles be measured from pixel coordinates."""
    Ki = K.K_inv
    m = Ki.T @ Ki
    return Omega(0.5 * (m + m.T))


def project_axes(K: CameraIntrinsics, pose: Pose, axis_len: float = 1.0) -> AxisLines:
    """Forward-project the object tri-axis to directed image lines.

    Each direction points from the projected origin toward the projected
    endpoint ``axis_len`` along the corresponding object axis.
    """
    if axis_len <= 0:
        raise ValueError("axis_len must be positive")
    origin = project_point(K, pose, np.zeros(3))
    dirs = np.empty((3, 2))
    for i in range(3):
        endpoint = np.zeros(3)
        endpoint[i] = axis_len
        delta = project_point(K, pose, endpoint) - origin
        n = np.linalg.norm(delta)
        if n < AXIS_DEGENERACY_PX:
            raise DegenerateAxis(i)
        dirs[i] = delta / n
    return AxisLines(origin_px=origin, dir=dirs)


def projected_axis_lengths(K: CameraIntrinsics, pose: Pose, axis_len: float = 1.0) -> np.ndarray:
    """Pixel length of each projected axis segment."""
    origin = project_point(K, pose, np.zeros(3))
    out = np.empty(3)
    for i in range(3):
        endpoint = np.zeros(3)
        endpoint[i] = axis_len
        out[i] = np.linalg.norm(project_point(K, pose, endpoint) - origin)
    return out


# --- rotation helpers ---

def rot_x(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Orthogonal Procrustes projection: the rotation closest to M in Frobenius norm."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt
