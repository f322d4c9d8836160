import dataclasses
import json

import numpy as np
import pytest

from axisforge.dataset import (
    Manifest,
    RunConfig,
    SamplingConfig,
    default_intrinsics,
    generate_dataset,
    load_config,
    load_manifest,
    pose_is_nondegenerate,
    record_seed,
    sample_pose,
    save_config,
)
from axisforge.errors import ManifestError
from axisforge.render import load_f32

CFG = dataclasses.replace(
    RunConfig(),
    intrinsics=default_intrinsics(16),
    sampling=SamplingConfig(depth_min=2.5, depth_max=3.5, lateral=0.2, min_axis_px=3.0),
    arch=dataclasses.replace(RunConfig().arch, image_size=16),
    seed=11,
)


def test_record_seed_stable_and_distinct():
    assert record_seed(1, "a") == record_seed(1, "a")
    assert record_seed(1, "a") != record_seed(1, "b")
    assert record_seed(1, "a") != record_seed(2, "a")
    assert 0 <= record_seed(123, "train_00000") < 2**63


def test_sample_pose_is_nondegenerate():
    rng = np.random.default_rng(0)
    K = CFG.intrinsics
    for _ in range(20):
        pose = sample_pose(rng, K, CFG.sampling)
        assert pose_is_nondegenerate(K, pose, CFG.sampling, 1.0)
        assert CFG.sampling.depth_min <= pose.T[2] <= CFG.sampling.depth_max


def test_sampling_config_validation():
    with pytest.raises(ValueError):
        SamplingConfig(depth_min=5.0, depth_max=3.0)
    with pytest.raises(ValueError):
        SamplingConfig(min_axis_px=0.0)


def test_generate_and_load_dataset(tmp_path):
    manifest = generate_dataset(CFG, n_train=3, n_test=2, out_dir=tmp_path)
    assert len(manifest.split("train")) == 3
    assert len(manifest.split("test")) == 2
    back = load_manifest(tmp_path)
    assert back.intrinsics == manifest.intrinsics
    for rec, rec2 in zip(manifest.records, back.records):
        assert rec.id == rec2.id
        assert np.allclose(rec.pose.R, rec2.pose.R, atol=1e-15)
        assert np.allclose(rec.pose.T, rec2.pose.T, atol=1e-15)
        img = load_f32(tmp_path / rec.triaxis_path, (16, 16, 3))
        assert img.min() >= 0.0 and img.max() <= 1.0
    ids = [r.id for r in back.records]
    assert len(set(ids)) == len(ids)


def test_generate_dataset_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_dataset(CFG, 2, 1, a)
    generate_dataset(CFG, 2, 1, b)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for rec in load_manifest(a).records:
        for p in (rec.query_path, rec.triaxis_path, rec.degraded_path):
            assert (a / p).read_bytes() == (b / p).read_bytes()


def test_load_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)  # missing file
    generate_dataset(CFG, 1, 1, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    doc["version"] = 999
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)


def test_load_manifest_missing_image(tmp_path):
    manifest = generate_dataset(CFG, 1, 1, tmp_path)
    (tmp_path / manifest.records[0].triaxis_path).unlink()
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)


def test_config_roundtrip(tmp_path):
    p = tmp_path / "config.json"
    save_config(p, CFG)
    back = load_config(p)
    assert back == CFG


def test_run_config_from_partial_dict():
    cfg = RunConfig.from_dict({"seed": 7, "sample_steps": 12})
    assert cfg.seed == 7
    assert cfg.sample_steps == 12
    assert cfg.intrinsics == RunConfig().intrinsics
