"""Axis observation extraction from tri-axis images.

Two variants share one moment-based pipeline:

* ``extract_axes_hard`` thresholds at 0.5 and is used at inference time.
* ``extract_axes_soft`` replaces the threshold with a sigmoid so that every
  output is a smooth function of every pixel; ``soft_extract_vjp`` is its
  hand-derived adjoint, used by the sampling-time guidance gradient.

Per channel: intensity-weighted mean, principal eigenvector of the 2x2
second-moment matrix, then a least-squares intersection of the three lines
gives the origin. Directions are sign-corrected to point from the origin
toward the channel mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannel, EmptyChannel, NoIntersection, VanishingMass
from .render import TriAxisImage

MIN_HARD_PIXELS = 8
SOFT_MASS_FLOOR = 1e-6
EIGEN_RATIO_FLOOR = 4.0
_INTERSECT_DET_FLOOR = 1e-6
DEFAULT_SHARPNESS = 50.0


@dataclass(frozen=True)
class AxisObservation:
    """Tri-axis measurement: intersection point, directed unit axes, centroid."""

    origin_px: np.ndarray
    dir: np.ndarray
    centroid: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin_px, dtype=float).reshape(2)
        d = np.asarray(self.dir, dtype=float).reshape(3, 2)
        c = np.asarray(self.centroid, dtype=float).reshape(2)
        object.__setattr__(self, "origin_px", o)
        object.__setattr__(self, "dir", d)
        object.__setattr__(self, "centroid", c)
        if np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-9:
            raise ValueError("axis directions must be unit vectors")

    def to_flat(self) -> list[float]:
        return [*self.origin_px, *self.dir.ravel(), *self.centroid]

    @classmethod
    def from_flat(cls, vals) -> "AxisObservation":
        v = np.asarray(vals, dtype=float).reshape(10)
        return cls(origin_px=v[:2], dir=v[2:8].reshape(3, 2), centroid=v[8:])


@dataclass(frozen=True)
class ObservationAdjoint:
    """Cotangent with the same shape as AxisObservation, without unit constraints."""

    origin_px: np.ndarray
    dir: np.ndarray
    centroid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin_px", np.asarray(self.origin_px, dtype=float).reshape(2))
        object.__setattr__(self, "dir", np.asarray(self.dir, dtype=float).reshape(3, 2))
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float).reshape(2))


def _coords(h: int, w: int) -> np.ndarray:
    vv, uu = np.mgrid[0:h, 0:w].astype(float)
    return np.stack([uu, vv], axis=-1)  # (H, W, 2) as (u, v)


class _ChannelState:
    """Forward intermediates for one channel, reused by the adjoint pass."""

    __slots__ = ("w", "mass", "mean", "a", "b", "c", "theta", "e", "sign")

    def __init__(self, w: np.ndarray, coords: np.ndarray, channel: int):
        self.w = w
        self.mass = float(w.sum())
        self.mean = (w[..., None] * coords).sum(axis=(0, 1)) / self.mass
        u = coords - self.mean
        self.a = float((w * u[..., 0] ** 2).sum() / self.mass)
        self.b = float((w * u[..., 0] * u[..., 1]).sum() / self.mass)
        self.c = float((w * u[..., 1] ** 2).sum() / self.mass)
        half = np.hypot(self.a - self.c, 2 * self.b) / 2.0
        mid = (self.a + self.c) / 2.0
        lam_max, lam_min = mid + half, mid - half
        # a segment has one dominant moment axis; a blob does not
        if lam_max <= 0 or lam_max / max(lam_min, 1e-300) < EIGEN_RATIO_FLOOR:
            raise DegenerateChannel(channel)
        self.theta = 0.5 * np.arctan2(2 * self.b, self.a - self.c)
        self.e = np.array([np.cos(self.theta), np.sin(self.theta)])
        self.sign = 1.0


def _intersect(states: list[_ChannelState]) -> np.ndarray:
    A = np.zeros((2, 2))
    r = np.zeros(2)
    for st in states:
        P = np.eye(2) - np.outer(st.e, st.e)
        A += P
        r += P @ st.mean
    if abs(np.linalg.det(A)) < _INTERSECT_DET_FLOOR:
        raise NoIntersection("axis lines are mutually parallel")
    return np.linalg.solve(A, r)


def _assemble(states: list[_ChannelState]) -> AxisObservation:
    origin = _intersect(states)
    dirs = np.empty((3, 2))
    for i, st in enumerate(states):
        st.sign = 1.0 if float(st.e @ (st.mean - origin)) >= 0 else -1.0
        dirs[i] = st.sign * st.e
    total = sum(st.mass for st in states)
    centroid = sum(st.mass * st.mean for st in states) / total
    return AxisObservation(origin_px=origin, dir=dirs, centroid=centroid)


def extract_axes_hard(img: TriAxisImage) -> AxisObservation:
    """Deterministic extraction: intensity weights thresholded at 0.5."""
    data = img.data
    h, w = data.shape[:2]
    coords = _coords(h, w)
    states = []
    for i in range(3):
        ch = data[:, :, i]
        mask = ch > 0.5
        if int(mask.sum()) < MIN_HARD_PIXELS:
            raise EmptyChannel(i)
        states.append(_ChannelState(ch * mask, coords, i))
    return _assemble(states)


def _soft_states(data: np.ndarray, sharpness: float) -> tuple[list[_ChannelState], np.ndarray]:
    if sharpness <= 0:
        raise ValueError("sharpness must be positive")
    h, w = data.shape[:2]
    coords = _coords(h, w)
    states = []
    for i in range(3):
        wgt = 1.0 / (1.0 + np.exp(-sharpness * (data[:, :, i] - 0.5)))
        if wgt.sum() <= SOFT_MASS_FLOOR:
            raise VanishingMass(i)
        states.append(_ChannelState(wgt, coords, i))
    return states, coords


def extract_axes_soft(img: TriAxisImage | np.ndarray, sharpness: float = DEFAULT_SHARPNESS) -> AxisObservation:
    """Differentiable extraction: sigmoid soft threshold in place of the hard one."""
    data = img.data if isinstance(img, TriAxisImage) else np.asarray(img, dtype=float)
    states, _ = _soft_states(data, sharpness)
    return _assemble(states)


def soft_extract_vjp(
    img: TriAxisImage | np.ndarray,
    sharpness: float,
    cotangent: ObservationAdjoint | AxisObservation,
) -> np.ndarray:
    """Adjoint of extract_axes_soft: d<cotangent, soft(img)>/d img, shape (H, W, 3)."""
    data = img.data if isinstance(img, TriAxisImage) else np.asarray(img, dtype=float)
    states, coords = _soft_states(data, sharpness)
    origin = _intersect(states)
    for st in states:
        st.sign = 1.0 if float(st.e @ (st.mean - origin)) >= 0 else -1.0
    total_mass = sum(st.mass for st in states)
    centroid = sum(st.mass * st.mean for st in states) / total_mass

    g_origin = cotangent.origin_px
    g_dir = cotangent.dir
    g_centroid = cotangent.centroid

    d_mean = [np.zeros(2) for _ in range(3)]
    d_mass = [0.0, 0.0, 0.0]
    d_e = [st.sign * g_dir[i] for i, st in enumerate(states)]

    # centroid = sum(mass_i * mean_i) / total_mass
    for i, st in enumerate(states):
        d_mean[i] += (st.mass / total_mass) * g_centroid
        d_mass[i] += float(g_centroid @ (st.mean - centroid)) / total_mass

    # origin = A^-1 r with A = sum(P_i), r = sum(P_i mean_i), P_i = I - e_i e_i^T
    A = np.zeros((2, 2))
    for st in states:
        A += np.eye(2) - np.outer(st.e, st.e)
    y = np.linalg.solve(A, g_origin)
    for i, st in enumerate(states):
        P = np.eye(2) - np.outer(st.e, st.e)
        G = np.outer(y, st.mean - origin)  # dL/dP_i
        d_e[i] += -(G + G.T) @ st.e
        d_mean[i] += P @ y

    grad = np.zeros_like(data)
    for i, st in enumerate(states):
        # e = (cos theta, sin theta); theta = atan2(2b, a - c) / 2
        d_theta = float(d_e[i] @ np.array([-st.e[1], st.e[0]]))
        x_t, y_t = st.a - st.c, 2.0 * st.b
        denom = x_t * x_t + y_t * y_t
        d_a = -0.5 * y_t / denom * d_theta
        d_c = 0.5 * y_t / denom * d_theta
        d_b = x_t / denom * d_theta

        u = coords - st.mean
        # the moment entries are insensitive to the mean shift (weighted mean
        # of centered coords is zero), so only direct terms remain
        g_w = (
            (u @ d_mean[i]) / st.mass
            + d_a * (u[..., 0] ** 2 - st.a) / st.mass
            + d_b * (u[..., 0] * u[..., 1] - st.b) / st.mass
            + d_c * (u[..., 1] ** 2 - st.c) / st.mass
            + d_mass[i]
        )
        grad[:, :, i] = g_w * sharpness * st.w * (1.0 - st.w)
    return grad
