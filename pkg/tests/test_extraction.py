import math

import numpy as np
import pytest

from axisforge.camera import project_axes
from axisforge.dataset import SamplingConfig, default_intrinsics, sample_pose
from axisforge.errors import DegenerateChannel, EmptyChannel
from axisforge.extraction import (
    AxisObservation,
    ObservationAdjoint,
    extract_axes_hard,
    extract_axes_soft,
    soft_extract_vjp,
)
from axisforge.render import TriAxisImage, render_triaxis

K = default_intrinsics(128)
SAMPLING = SamplingConfig(min_axis_px=10.0)


def _angle_deg(a, b):
    return math.degrees(math.acos(float(np.clip(a @ b, -1.0, 1.0))))


def test_hard_extraction_matches_forward_projection():
    rng = np.random.default_rng(0)
    for _ in range(10):
        pose = sample_pose(rng, K, SAMPLING)
        img = render_triaxis(K, pose, thickness_px=2.0)
        lines = project_axes(K, pose)
        obs = extract_axes_hard(img)
        assert np.linalg.norm(obs.origin_px - lines.origin_px) < 1.5
        for i in range(3):
            assert _angle_deg(obs.dir[i], lines.dir[i]) < 3.0


def test_hard_extraction_empty_channel():
    with pytest.raises(EmptyChannel):
        extract_axes_hard(TriAxisImage(np.zeros((32, 32, 3))))


def test_hard_extraction_blob_is_degenerate():
    img = np.zeros((32, 32, 3))
    img[10:20, 10:20, :] = 1.0  # isotropic square in every channel
    with pytest.raises(DegenerateChannel):
        extract_axes_hard(TriAxisImage(img))


def test_directions_point_toward_channel_mass():
    rng = np.random.default_rng(1)
    pose = sample_pose(rng, K, SAMPLING)
    img = render_triaxis(K, pose, thickness_px=2.0)
    obs = extract_axes_hard(img)
    for i in range(3):
        ys, xs = np.nonzero(img.data[:, :, i] > 0.5)
        mean = np.array([xs.mean(), ys.mean()])
        assert float(obs.dir[i] @ (mean - obs.origin_px)) > 0


def test_hard_soft_agreement():
    rng = np.random.default_rng(2)
    for _ in range(10):
        pose = sample_pose(rng, K, SAMPLING)
        img = render_triaxis(K, pose, thickness_px=2.0)
        hard = extract_axes_hard(img)
        soft = extract_axes_soft(img, sharpness=50.0)
        assert np.linalg.norm(hard.origin_px - soft.origin_px) < 0.5
        for i in range(3):
            assert _angle_deg(hard.dir[i], soft.dir[i]) < 1.5


def test_soft_extraction_sharpness_validation():
    img = np.zeros((8, 8, 3))
    with pytest.raises(ValueError):
        extract_axes_soft(img, sharpness=0.0)


def test_soft_vjp_matches_finite_differences():
    rng = np.random.default_rng(3)
    pose = sample_pose(rng, default_intrinsics(32), SamplingConfig(min_axis_px=6.0))
    img = render_triaxis(default_intrinsics(32), pose, thickness_px=1.5).data
    cot_vec = rng.standard_normal(10)
    adj = ObservationAdjoint(
        origin_px=cot_vec[:2], dir=cot_vec[2:8].reshape(3, 2), centroid=cot_vec[8:]
    )
    grad = soft_extract_vjp(img, 50.0, adj)
    h = 1e-4
    for _ in range(5):
        v = rng.standard_normal(img.shape)
        v /= np.linalg.norm(v)
        sp = float(cot_vec @ np.array(extract_axes_soft(img + h * v, 50.0).to_flat()))
        sm = float(cot_vec @ np.array(extract_axes_soft(img - h * v, 50.0).to_flat()))
        fd = (sp - sm) / (2 * h)
        an = float((grad * v).sum())
        assert abs(an - fd) < 1e-4 * max(1.0, abs(fd))


def test_observation_flat_roundtrip():
    rng = np.random.default_rng(4)
    d = rng.standard_normal((3, 2))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    obs = AxisObservation(origin_px=[1.0, 2.0], dir=d, centroid=[3.0, 4.0])
    back = AxisObservation.from_flat(obs.to_flat())
    assert np.allclose(back.origin_px, obs.origin_px)
    assert np.allclose(back.dir, obs.dir)
    assert np.allclose(back.centroid, obs.centroid)


def test_observation_requires_unit_directions():
    with pytest.raises(ValueError):
        AxisObservation(origin_px=np.zeros(2), dir=np.ones((3, 2)), centroid=np.zeros(2))
