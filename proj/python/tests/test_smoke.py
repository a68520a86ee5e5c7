import json
import math

import numpy as np
import pytest

import lsa


def test_coefficients():
    for sigma in (0.002, 0.5, 1.0, 80.0):
        assert lsa.c_skip(sigma) == pytest.approx(1 / (1 + sigma**2), rel=1e-12)
        assert lsa.c_out(sigma) == pytest.approx(-sigma / math.sqrt(1 + sigma**2), rel=1e-12)
        assert lsa.loss_weight(sigma) == pytest.approx((1 + sigma**2) / sigma**2, rel=1e-12)
    sigmas = lsa.karras_sigmas(10)
    assert sigmas[0] == 80.0 and sigmas[-1] == 0.0 and len(sigmas) == 11


def test_denoised_estimate_inverts_exact_velocity():
    rng = np.random.default_rng(0)
    z0 = rng.normal(size=(2, 4, 3, 3))
    zt = z0 + 0.7 * rng.normal(size=z0.shape)
    v = (z0 - lsa.c_skip(0.7) * zt) / lsa.c_out(0.7)
    np.testing.assert_allclose(lsa.denoised_estimate(zt, v, 0.7), z0, atol=1e-12)
    assert lsa.diffusion_loss(z0, z0, 0.7) == 0.0


def test_mask_and_feature_loss():
    boxes = [[(0, 0, 8, 8, "car", 0)], []]
    mask = lsa.build_mask(boxes, 8, 8, 4, {"alpha": 10.0})
    assert mask.shape == (2, 8, 8)
    assert mask[0, :2, :2].tolist() == [[10.0, 10.0], [10.0, 10.0]]
    assert mask[0, 2:, :].max() == 1.0 and (mask[1] == 1.0).all()
    global_mask = lsa.build_mask(boxes, 8, 8, 4, {"variant": "global-only"})
    assert (global_mask == 1.0).all()

    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 8, 8, 3))
    b = rng.normal(size=(2, 8, 8, 3))
    want = np.mean(((a - b) * mask[..., None]) ** 2)
    assert lsa.feature_consistency_loss(a, b, mask, 10.0) == pytest.approx(want, rel=1e-12)
    assert lsa.combined_loss(1.0, 0.01, 0.9, 100.0) == pytest.approx(1.9)
    with pytest.raises(lsa.ShapeError):
        lsa.feature_consistency_loss(a, b[:, :4], mask, 10.0)


def test_metrics():
    assert lsa.iou((0, 0, 2, 2), (1, 0, 3, 2)) == pytest.approx(1 / 3)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(50, 3)).tolist()
    assert lsa.frechet_distance(x, x) == pytest.approx(0.0, abs=1e-9)


def test_scenes():
    spec = lsa.sample_scene_spec(3)
    frames, boxes = lsa.generate_scene(spec, 4, 64, 64)
    assert frames.shape == (4, 3, 64, 64)
    assert 0.0 <= frames.min() and frames.max() <= 1.0
    assert len(boxes) == 4
    again, _ = lsa.generate_scene(spec, 4, 64, 64)
    assert (frames == again).all()


def test_config_errors():
    with pytest.raises(lsa.ConfigError, match="loss.lamda_feat"):
        lsa.resolve_config({"loss": {"lamda_feat": 1}})
    assert lsa.resolve_config({})["dataset"]["train_count"] == 1000


def test_tiny_pipeline(tmp_path):
    cfg = {
        "seed": 1,
        "paths": {"dataset": str(tmp_path / "data"), "output": str(tmp_path / "run")},
        "dataset": {"train_count": 3, "test_count": 2, "frames": 3, "height": 16, "width": 16},
        "backbones": {"codec": {"hidden": 4}, "denoiser": {"hidden": 6, "cond_dim": 8}, "extractor": {"feature_dim": 8}},
        "codec_training": {"steps": 2, "frames_per_step": 2},
        "train": {"epochs": 2},
        "eval": {"sampling_steps": 2},
    }
    manifest = lsa.make_data(cfg)
    assert len(manifest["clips"]) == 5
    with pytest.raises(lsa.IoError):
        lsa.make_data(cfg)
    lsa.pretrain_codec(cfg)
    messages = []
    final = lsa.train(cfg, log=messages.append)
    lines = (tmp_path / "run" / "metrics.ndjson").read_text().splitlines()
    assert len(lines) == 6
    assert list(json.loads(lines[0])) == ["step", "epoch", "diffusion_loss", "feature_loss", "total"]
    gen = tmp_path / "gen"
    lsa.generate(final, tmp_path / "data" / "manifest.json", gen, cfg)
    report = lsa.evaluate(gen, tmp_path / "data" / "manifest.json", cfg, gen / "report.json")
    assert report["frechet_frame"] >= 0.0
    assert (gen / "report.json").exists()
