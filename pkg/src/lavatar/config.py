"""Run configuration: optimization hyperparameters, camera ranges, presets.

Defaults reproduce the reference recipe: 15000 body steps / 12000 clothes
steps, learning rates 3e-4 (offsets), 5e-3 (texture), 3e-3 (shape), camera
azimuth [-180, 180] deg, distance [1.25, 2.3] m, vertical FoV [45, 50] deg.
Elevation range, close-up probability and all loss weights are this
project's own choices and are recorded in asset provenance.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class LossWeights:
    rgb: float = 1.0
    normal: float = 0.5
    albedo_smooth: float = 1.0
    laplacian: float = 100.0
    offset: float = 10.0
    clothes_render: float = 1.0   # stage II: weight of the clothes-only images
    clothed_render: float = 1.0   # stage II: weight of the blended images


@dataclass
class SceneAnchors:
    """World-space targets for camera aiming; updated by the stage loops."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    head: np.ndarray = field(default_factory=lambda: np.zeros(3))
    left_hand: np.ndarray = field(default_factory=lambda: np.zeros(3))
    right_hand: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class StageConfig:
    steps: int = 15000
    lr_offsets: float = 3e-4
    lr_texture: float = 5e-3
    lr_beta: float = 3e-3
    image_size: int = 512
    azimuth_range: tuple[float, float] = (-180.0, 180.0)
    azimuth_snap_deg: float | None = None   # quantize sampled azimuths (None: continuous)
    distance_range: tuple[float, float] = (1.25, 2.3)
    fov_range: tuple[float, float] = (45.0, 50.0)
    elevation_range: tuple[float, float] = (-10.0, 30.0)
    close_up_probability: float = 0.2
    garment_vertical_bias: float = 0.0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    rng_seed: int = 0
    prompt_id: str = "body"
    t_range: tuple[float, float] = (0.02, 0.98)
    noising: str = "additive"
    guidance_scale: float = 7.5
    light_mode: str = "random"        # "random" | "ambient" | "fixed"
    ambient_level: float = 1.0
    fixed_light_position: tuple[float, float, float] = (2.0, 3.0, 2.5)
    fixed_light_diffuse: float = 0.6
    fixed_light_ambient: float = 0.55
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    pose_preset: str = "a_pose"
    albedo_probe_count: int = 256
    albedo_sigma: float = 0.01
    geometry_warmup_steps: int = 0   # texture-only steps before geometry unfreezes
    checkpoint_every: int = 500
    anchors: SceneAnchors = field(default_factory=SceneAnchors)

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        for name in ("azimuth_range", "distance_range", "fov_range",
                     "elevation_range", "t_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")
        if not 0.0 <= self.close_up_probability <= 1.0:
            raise ValueError("close_up_probability must be in [0,1]")
        if self.distance_range[0] <= 0:
            raise ValueError("distance must be positive")
        if not (0 < self.fov_range[0] and self.fov_range[1] < 180):
            raise ValueError("fov range out of bounds")


def default_stage1_config() -> StageConfig:
    return StageConfig()


def default_stage2_config(garment_type=None) -> StageConfig:
    cfg = StageConfig(steps=12000, prompt_id="clothes")
    if garment_type is not None:
        cfg = replace(cfg, garment_vertical_bias=default_vertical_bias(garment_type))
    return cfg


def default_vertical_bias(garment_type) -> float:
    """Aim the camera higher for upper-body garments, lower for pants."""
    name = getattr(garment_type, "value", str(garment_type))
    if name in ("long_shirt", "short_shirt", "vest"):
        return 0.2
    if name in ("long_pants", "short_pants"):
        return -0.25
    return 0.0


# Named stance presets (per-joint axis-angle). The procedural test body is
# modeled standing in its generation stance, so both presets are zero for it;
# config files may define numeric presets for other models.
POSE_PRESETS: dict[str, object] = {
    "rest": None,
    "a_pose": None,
}


def resolve_pose_preset(name: str, joint_count: int,
                        extra: dict[str, object] | None = None) -> np.ndarray:
    table = dict(POSE_PRESETS)
    if extra:
        table.update(extra)
    if name not in table:
        raise KeyError(f"unknown pose preset {name!r}; have {sorted(table)}")
    value = table[name]
    if value is None:
        return np.zeros((joint_count, 3))
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (joint_count, 3):
        raise ValueError(f"pose preset {name!r} has shape {arr.shape}, "
                         f"expected ({joint_count}, 3)")
    return arr


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def _tupleize(cfg: StageConfig) -> StageConfig:
    for name in ("azimuth_range", "distance_range", "fov_range", "elevation_range",
                 "t_range", "background"):
        setattr(cfg, name, tuple(getattr(cfg, name)))
    return cfg


def stage_config_from_dict(data: dict, base: StageConfig | None = None) -> StageConfig:
    """Apply a flat dict of overrides onto a base config."""
    cfg = base if base is not None else StageConfig()
    data = dict(data)
    weights = data.pop("loss_weights", None)
    unknown = set(data) - set(cfg.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = replace(cfg, **data)
    if weights is not None:
        cfg.loss_weights = replace(cfg.loss_weights, **weights)
    return _tupleize(cfg)


def load_stage_config(path: str | Path, base: StageConfig | None = None) -> StageConfig:
    """Load overrides from a .toml or .json file."""
    path = Path(path)
    if path.suffix == ".toml":
        data = tomllib.loads(path.read_text())
    elif path.suffix == ".json":
        data = json.loads(path.read_text())
    else:
        raise ValueError(f"unsupported config format {path.suffix!r} (use .toml or .json)")
    return stage_config_from_dict(data, base)


def config_snapshot(cfg: StageConfig) -> dict:
    """JSON-ready dump for provenance records."""
    snap = asdict(cfg)
    snap["anchors"] = {k: list(np.asarray(v, dtype=float))
                       for k, v in asdict(cfg.anchors).items()}
    return snap
