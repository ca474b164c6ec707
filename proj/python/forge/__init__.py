"""Python bindings for the forge one-shot segmentation toolkit.

Arrays are NumPy: volumes and offsets float32 (D, H, W), label maps int64
(D, H, W), displacement fields float32 (3, D, H, W) in voxel units.
"""

import json

import torch  # noqa: F401  loads the libtorch shared libraries

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    DependencyError,
    ForgeError,
    StaleArtifactError,
    TrainingDivergedError,
    ce_loss,
    dice,
    load_field,
    load_labels,
    load_volume,
    local_cc_loss,
    save_labels,
    save_volume,
    smoothness_loss,
    stages,
    synthesize,
    warp_nearest,
    warp_trilinear,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DependencyError",
    "ForgeError",
    "StaleArtifactError",
    "TrainingDivergedError",
    "ce_loss",
    "default_phantom_spec",
    "dice",
    "evaluate",
    "generate_phantoms",
    "load_field",
    "load_labels",
    "load_volume",
    "local_cc_loss",
    "resolve_config",
    "run_stage",
    "save_labels",
    "save_volume",
    "smoothness_loss",
    "stages",
    "synthesize",
    "warp_nearest",
    "warp_trilinear",
]


def default_phantom_spec():
    return json.loads(_core.default_phantom_spec())


def generate_phantoms(count, **spec):
    """Returns a list of (image, labels, deformation) for `count` members."""
    full = default_phantom_spec()
    full.update(spec)
    return _core.generate_phantoms(json.dumps(full), count)


def evaluate(predictions, truths, num_classes):
    """Dice report as a dict: subjects, per_region and aggregate statistics."""
    return json.loads(_core.evaluate(list(predictions), list(truths), num_classes))


def resolve_config(config=None):
    """Full experiment configuration after applying the preset and overrides."""
    return json.loads(_core.resolve_config(json.dumps(config or {})))


def run_stage(config, stage, root, force=False):
    """Runs one pipeline stage under `root` and returns its result."""
    return json.loads(_core.run_stage(json.dumps(config), stage, str(root), force))
