"""Python access to the lsa library: diffusion coefficients, the localized
feature loss, synthetic scenes, metrics, and the pipeline commands."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    FormatError,
    InvariantError,
    IoError,
    LsaError,
    NonFiniteError,
    ShapeError,
    SpecMismatchError,
    c_out,
    c_skip,
    combined_loss,
    denoised_estimate,
    diffusion_loss,
    feature_consistency_loss,
    frechet_distance,
    iou,
    karras_sigmas,
    loss_weight,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "FormatError",
    "InvariantError",
    "IoError",
    "LsaError",
    "NonFiniteError",
    "ShapeError",
    "SpecMismatchError",
    "build_mask",
    "c_out",
    "c_skip",
    "combined_loss",
    "default_config",
    "denoised_estimate",
    "diffusion_loss",
    "evaluate",
    "feature_consistency_loss",
    "frechet_distance",
    "generate",
    "generate_scene",
    "iou",
    "karras_sigmas",
    "loss_weight",
    "make_data",
    "pretrain_codec",
    "resolve_config",
    "run_ablation",
    "sample_scene_spec",
    "train",
]


def _dump(obj):
    return "" if obj is None else _json.dumps(obj)


def default_config():
    return _json.loads(_core.default_config())


def resolve_config(config):
    """Fills defaults and validates a run-config dict."""
    return _json.loads(_core.resolve_config(_dump(config)))


def build_mask(boxes, grid_h, grid_w, patch_size, loss_config=None):
    """Per-frame patch weights [N, grid_h, grid_w]; boxes are per-frame lists of
    (x_min, y_min, x_max, y_max[, class, id]) tuples in pixels."""
    return _core.build_mask(boxes, grid_h, grid_w, patch_size, _dump(loss_config))


def sample_scene_spec(seed):
    return _json.loads(_core.sample_scene_spec(seed))


def generate_scene(spec, frames, height, width):
    """Returns (frames [N, 3, H, W] in [0, 1], per-frame box tuples)."""
    return _core.generate_scene(_dump(spec), frames, height, width)


def make_data(config, force=False, log=None):
    return _json.loads(_core.make_data(_dump(config), force, log))


def pretrain_codec(config, log=None):
    """Returns (final reconstruction mse, latent scale)."""
    return _core.pretrain_codec(_dump(config), log)


def train(config, log=None):
    """Returns the directory holding the trained backbones."""
    return _core.train(_dump(config), log)


def generate(checkpoint, manifest, out_dir, config, split="test"):
    _core.generate(checkpoint, manifest, out_dir, _dump(config), split)


def evaluate(generated, manifest, config, report, csv="", split="test"):
    return _json.loads(_core.evaluate(generated, manifest, _dump(config), report, csv, split))


def run_ablation(config, log=None):
    return _json.loads(_core.run_ablation(_dump(config), log))
