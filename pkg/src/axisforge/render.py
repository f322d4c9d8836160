"""Synthetic scene rendering: tri-axis ground truth, shaded query images,
and seeded degradations.

All renders are deterministic given identical inputs. Images are float
arrays in [0, 1]; persistence helpers store them as little-endian float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, Pose, project_axes, project_point
from .errors import NonPositiveDepth

_LIGHT = np.array([1.0, 1.0, -1.0]) / np.sqrt(3.0)  # directional light, toward scene
_AMBIENT = 0.15


@dataclass(frozen=True)
class TriAxisImage:
    """(H, W, 3) float image; channels 0/1/2 carry the X/Y/Z axis segments."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", d)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError("tri-axis image must have shape (H, W, 3)")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("tri-axis values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class QueryImage:
    """(H, W) single-channel shaded rendering of the scene cuboid."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", d)
        if d.ndim != 2:
            raise ValueError("query image must have shape (H, W)")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("query values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DegradationSpec:
    """Controlled corruption: occlusion rectangle, additive noise, box blur."""

    occlusion_frac: float = 0.0
    noise_sigma: float = 0.0
    blur_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.occlusion_frac < 1.0:
            raise ValueError("occlusion_frac must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.blur_radius < 0:
            raise ValueError("blur_radius must be >= 0")

    def to_dict(self) -> dict:
        return {
            "occlusion_frac": self.occlusion_frac,
            "noise_sigma": self.noise_sigma,
            "blur_radius": self.blur_radius,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(
            occlusion_frac=float(d.get("occlusion_frac", 0.0)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            blur_radius=int(d.get("blur_radius", 0)),
            seed=int(d.get("seed", 0)),
        )


def _segment_distance(h: int, w: int, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Per-pixel distance from pixel centers to the segment p0-p1 (pixel coords)."""
    vv, uu = np.mgrid[0:h, 0:w].astype(float)
    px = np.stack([uu, vv], axis=-1)  # (H, W, 2) as (u, v)
    d = p1 - p0
    len2 = float(d @ d)
    if len2 < 1e-18:
        return np.linalg.norm(px - p0, axis=-1)
    t = np.clip(((px - p0) @ d) / len2, 0.0, 1.0)
    closest = p0 + t[..., None] * d
    return np.linalg.norm(px - closest, axis=-1)


def render_triaxis(
    K: CameraIntrinsics,
    pose: Pose,
    axis_len: float = 1.0,
    thickness_px: float = 2.0,
    size: tuple[int, int] | None = None,
) -> TriAxisImage:
    """Rasterize the projected tri-axis as anti-aliased segments.

    Each channel holds one axis drawn from the projected origin to the
    projected endpoint: intensity 1 on the core, linear 1-pixel falloff.
    """
    h, w = size if size is not None else (K.height, K.width)
    axes = project_axes(K, pose, axis_len)  # raises on degenerate poses
    origin = axes.origin_px
    img = np.zeros((h, w, 3))
    r = thickness_px / 2.0
    for i in range(3):
        endpoint = np.zeros(3)
        endpoint[i] = axis_len
        p1 = project_point(K, pose, endpoint)
        d = _segment_distance(h, w, origin, p1)
        img[:, :, i] = np.clip(r + 0.5 - d, 0.0, 1.0)
    return TriAxisImage(img)


_CUBOID_FACES = (
    # (axis, sign): face with outward object-frame normal sign * e_axis
    (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0),
)


def _face_corners(axis: int, sign: float, hx: float) -> np.ndarray:
    """Corners of one cuboid face, ordered around the face."""
    a, b = (axis + 1) % 3, (axis + 2) % 3
    out = np.zeros((4, 3))
    for k, (sa, sb) in enumerate(((-1, -1), (1, -1), (1, 1), (-1, 1))):
        out[k, axis] = sign * hx
        out[k, a] = sa * hx
        out[k, b] = sb * hx
    return out


def _fill_convex_quad(img: np.ndarray, quad: np.ndarray, value: float) -> None:
    """Paint a convex quad (pixel coords) with 1-pixel anti-aliased edges."""
    h, w = img.shape
    area2 = 0.0
    for k in range(4):
        p, q = quad[k], quad[(k + 1) % 4]
        area2 += p[0] * q[1] - q[0] * p[1]
    if abs(area2) < 1e-12:
        return
    orient = np.sign(area2)
    vv, uu = np.mgrid[0:h, 0:w].astype(float)
    inside = np.full((h, w), -np.inf)
    for k in range(4):
        p, q = quad[k], quad[(k + 1) % 4]
        e = q - p
        n = np.linalg.norm(e)
        if n < 1e-12:
            continue
        # signed distance, positive outside for this winding
        d = (orient * ((uu - p[0]) * e[1] - (vv - p[1]) * e[0])) / n
        inside = np.maximum(inside, d)
    cover = np.clip(0.5 - inside, 0.0, 1.0)
    np.copyto(img, value * cover + img * (1 - cover))


def render_query(
    K: CameraIntrinsics,
    pose: Pose,
    size: tuple[int, int] | None = None,
    half_extent: float = 1.0,
) -> QueryImage:
    """Lambertian-shaded cuboid at the pose, painter's-algorithm face order."""
    h, w = size if size is not None else (K.height, K.width)
    corners_obj = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=float,
    ) * half_extent
    depths = (corners_obj @ pose.R.T + pose.T)[:, 2]
    if depths.min() <= 1e-9:
        raise NonPositiveDepth("cuboid is not fully in front of the camera")

    faces = []
    for axis, sign in _CUBOID_FACES:
        pts = _face_corners(axis, sign, half_extent)
        cam = pts @ pose.R.T + pose.T
        quad = np.stack([project_point(K, pose, p) for p in pts])
        n_cam = pose.R[:, axis] * sign
        shade = _AMBIENT + (1 - _AMBIENT) * max(0.0, float(n_cam @ (-_LIGHT)))
        faces.append((float(cam[:, 2].mean()), quad, shade))

    img = np.zeros((h, w))
    for _, quad, shade in sorted(faces, key=lambda f: -f[0]):
        _fill_convex_quad(img, quad, shade)
    return QueryImage(np.clip(img, 0.0, 1.0))


def _box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    """Separable box blur with edge-clamped borders."""
    if radius == 0:
        return img
    k = 2 * radius + 1
    kernel = np.full(k, 1.0 / k)

    def blur_axis(a: np.ndarray, axis: int) -> np.ndarray:
        padded = np.pad(
            a, [(radius, radius) if i == axis else (0, 0) for i in range(a.ndim)],
            mode="edge",
        )
        return np.apply_along_axis(
            lambda m: np.convolve(m, kernel, mode="valid"), axis, padded
        )

    return blur_axis(blur_axis(img, 0), 1)


def apply_degradation(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Occlude, add noise, clamp, then blur. Seeded and reproducible."""
    out = np.array(img, dtype=float)
    h, w = out.shape[:2]
    rng = np.random.default_rng(spec.seed)
    if spec.occlusion_frac > 0:
        area = spec.occlusion_frac * h * w
        aspect = rng.uniform(0.5, 2.0)
        rw = min(w, max(1, int(round(np.sqrt(area * aspect)))))
        rh = min(h, max(1, int(round(area / rw))))
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        out[top : top + rh, left : left + rw] = 0.0
    if spec.noise_sigma > 0:
        out = out + rng.normal(0.0, spec.noise_sigma, size=out.shape)
    out = np.clip(out, 0.0, 1.0)
    if spec.blur_radius > 0:
        out = _box_blur(out, spec.blur_radius)
    return out


# --- persistence ---

def save_f32(path: str | Path, img: np.ndarray) -> None:
    """Raw little-endian float32, row-major, channel-interleaved."""
    np.asarray(img, dtype="<f4").tofile(str(path))


def load_f32(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    data = np.fromfile(str(path), dtype="<f4")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} floats, found {data.size}")
    return data.reshape(shape).astype(float)


def save_ppm(path: str | Path, img: np.ndarray) -> None:
    """8-bit P6 export for visual inspection; values scaled by 255, round half-up."""
    a = np.asarray(img, dtype=float)
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    h, w = a.shape[:2]
    b = np.floor(a * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(b.tobytes())
