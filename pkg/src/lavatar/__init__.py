"""Layered parametric avatar engine.

Bodies are a parametric template plus trainable vertex offsets; garments are
masked offset layers sharing the body topology. A differentiable software
rasterizer and a guidance-driven distillation loop generate both; composition
tooling supports try-on, shape editing, animation and export.
"""

from .appearance import AlbedoField, ShadingConfig, positional_encode, sample_light, shade
from .bodymodel import (BodyModel, BodyModelError, ShapeParams, blend_shapes,
                        generate_test_body, lbs, load_body_model, regress_joints,
                        save_body_model, subdivide)
from .camera import Camera, orbit_camera
from .config import (LossWeights, StageConfig, default_stage1_config,
                     default_stage2_config, load_stage_config)
from .distillation import (CloseUp, EchoOracle, GuidanceOracle, TargetImageOracle,
                           make_target_image_oracle, run_stage1, run_stage2,
                           sample_camera)
from .layering import (BodyLayer, GarmentLayer, GarmentType, SubMesh, compose_body,
                       compose_clothed, compose_layers, extract_clothes,
                       garment_mask_template, new_garment, refit_garment)
from .objectives import (GuidanceRequest, albedo_smoothness_loss, cfg_combine,
                         laplacian_loss, offset_loss, sds_pixel_gradient)
from .renderer import (RenderOutput, backward_render, blend_images, rasterize,
                       render_pose_map)

__version__ = "0.1.0"

__all__ = [
    "AlbedoField", "BodyLayer", "BodyModel", "BodyModelError", "Camera", "CloseUp",
    "EchoOracle", "GarmentLayer", "GarmentType", "GuidanceOracle", "GuidanceRequest",
    "LossWeights", "RenderOutput", "ShadingConfig", "ShapeParams", "StageConfig",
    "SubMesh", "TargetImageOracle", "albedo_smoothness_loss", "backward_render",
    "blend_images", "blend_shapes", "cfg_combine", "compose_body", "compose_clothed",
    "compose_layers", "default_stage1_config", "default_stage2_config",
    "extract_clothes", "garment_mask_template", "generate_test_body", "laplacian_loss",
    "lbs", "load_body_model", "load_stage_config", "make_target_image_oracle",
    "new_garment", "offset_loss", "orbit_camera", "positional_encode", "rasterize",
    "refit_garment", "regress_joints", "render_pose_map", "run_stage1", "run_stage2",
    "sample_camera", "sample_light", "save_body_model", "sds_pixel_gradient", "shade",
    "subdivide",
]
