"""Composition algebra for layered avatars.

A body layer is shape parameters plus a free per-vertex offset field; a
garment layer is a binary vertex mask and an offset field that only lives
inside the mask. Layers stack additively on the shared topology, and the
clothes mesh is recovered by masking the composed mesh.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bodymodel import BodyModel, ShapeParams, blend_shapes


class GarmentType(enum.Enum):
    LONG_SHIRT = "long_shirt"
    SHORT_SHIRT = "short_shirt"
    LONG_PANTS = "long_pants"
    SHORT_PANTS = "short_pants"
    VEST = "vest"
    OVERALLS = "overalls"


# garment type -> body regions included in its mask template
GARMENT_REGIONS: dict[GarmentType, tuple[str, ...]] = {
    GarmentType.LONG_SHIRT: ("torso", "upper_arm", "lower_arm"),
    GarmentType.SHORT_SHIRT: ("torso", "upper_arm"),
    GarmentType.LONG_PANTS: ("hips", "upper_leg", "lower_leg"),
    GarmentType.SHORT_PANTS: ("hips", "upper_leg"),
    GarmentType.VEST: ("torso",),
    GarmentType.OVERALLS: ("torso", "hips", "upper_leg", "lower_leg"),
}

_ALWAYS_EXCLUDED = ("head", "hand", "foot")


class LayeringError(ValueError):
    pass


@dataclass
class BodyLayer:
    beta: np.ndarray      # (Ks,)
    offsets: np.ndarray   # (V, 3) rest-frame offsets
    albedo_ref: str = "body"

    def validate(self, model: BodyModel) -> None:
        if self.offsets.shape != (model.vertex_count, 3):
            raise LayeringError(
                f"body offsets shape {self.offsets.shape} != ({model.vertex_count}, 3)")
        if not np.isfinite(self.offsets).all():
            raise LayeringError("body offsets must be finite")


@dataclass
class GarmentLayer:
    garment_type: GarmentType
    mask: np.ndarray      # (V,) 0/1
    offsets: np.ndarray   # (V, 3), zero outside mask
    albedo_ref: str = "clothes"
    layer_order: int = 0

    def validate(self, vertex_count: int) -> None:
        if self.mask.shape != (vertex_count,):
            raise LayeringError(f"mask shape {self.mask.shape} != ({vertex_count},)")
        if self.offsets.shape != (vertex_count, 3):
            raise LayeringError(f"offsets shape {self.offsets.shape} != ({vertex_count}, 3)")
        outside = self.offsets[self.mask == 0]
        if outside.size and np.abs(outside).max() != 0.0:
            raise LayeringError("garment offsets must be exactly zero outside the mask")

    def project(self) -> None:
        """Zero offsets outside the mask; call after every optimizer update."""
        self.offsets[self.mask == 0] = 0.0


@dataclass
class SubMesh:
    """A vertex/face subset with a map back into the parent mesh."""

    vertices: np.ndarray      # (Vs, 3)
    faces: np.ndarray         # (Fs, 3) indices into the submesh
    parent_indices: np.ndarray  # (Vs,) submesh vertex -> parent vertex
    skin_weights: np.ndarray | None = None
    part_labels: np.ndarray | None = None


def garment_mask_template(model: BodyModel, garment_type: GarmentType) -> np.ndarray:
    """Binary vertex mask from the fixed region mapping for this garment type."""
    regions = GARMENT_REGIONS[garment_type]
    mask = np.zeros(model.vertex_count, dtype=np.int64)
    for region in regions:
        labels = model.region_labels(region)
        if not labels:
            raise LayeringError(f"model has no part labels for required region '{region}'")
        mask |= np.isin(model.part_labels, labels).astype(np.int64)
    for region in _ALWAYS_EXCLUDED:
        labels = model.region_labels(region)
        if labels:
            mask[np.isin(model.part_labels, labels)] = 0
    return mask


def a_pose_params(model: BodyModel, beta: np.ndarray,
                  pose_preset: np.ndarray | None = None) -> ShapeParams:
    """Generation-time pose: the configured stance preset (default rest)."""
    theta = (np.zeros((model.joint_count, 3)) if pose_preset is None
             else np.asarray(pose_preset, dtype=np.float64))
    return ShapeParams(beta=np.asarray(beta, dtype=np.float64), theta=theta,
                       psi=np.zeros(model.expression_basis.shape[0]))


def compose_body(model: BodyModel, body: BodyLayer,
                 pose_preset: np.ndarray | None = None) -> np.ndarray:
    """Rest-pose body mesh: blend shapes at the generation stance + offsets."""
    body.validate(model)
    return blend_shapes(model, a_pose_params(model, body.beta, pose_preset)) + body.offsets


def compose_clothed(body_mesh: np.ndarray, garment: GarmentLayer) -> np.ndarray:
    """Clothed mesh: body + garment offsets gated by the vertex mask."""
    body_mesh = np.asarray(body_mesh, dtype=np.float64)
    garment.validate(body_mesh.shape[0])
    return body_mesh + garment.offsets * garment.mask[:, None]


def compose_layers(body_mesh: np.ndarray, layers: list[GarmentLayer]) -> list[np.ndarray]:
    """Stack garment layers; returns every intermediate [T_h, T_1, ..., T_K]."""
    orders = [g.layer_order for g in layers]
    if len(set(orders)) != len(orders):
        raise LayeringError(f"duplicate layer orders: {orders}")
    if orders != sorted(orders):
        raise LayeringError(f"layer orders must be increasing, got {orders}")
    meshes = [np.asarray(body_mesh, dtype=np.float64)]
    for g in layers:
        meshes.append(compose_clothed(meshes[-1], g))
    return meshes


def extract_clothes(composed: np.ndarray, garment: GarmentLayer,
                    faces: np.ndarray, model: BodyModel | None = None) -> SubMesh:
    """Masked vertices and fully-masked faces of the composed mesh."""
    composed = np.asarray(composed, dtype=np.float64)
    garment.validate(composed.shape[0])
    keep = np.where(garment.mask == 1)[0]
    if keep.size == 0:
        raise LayeringError("garment mask is empty")
    remap = -np.ones(composed.shape[0], dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    fmask = (garment.mask[faces] == 1).all(axis=1)
    sub_faces = remap[faces[fmask]]
    return SubMesh(
        vertices=composed[keep].copy(),
        faces=sub_faces,
        parent_indices=keep,
        skin_weights=model.skin_weights[keep].copy() if model is not None else None,
        part_labels=model.part_labels[keep].copy() if model is not None else None,
    )


def garment_faces(garment: GarmentLayer, faces: np.ndarray) -> np.ndarray:
    """Boolean per-face flag: all three corners inside the garment mask."""
    return (garment.mask[faces] == 1).all(axis=1)


def refit_garment(model: BodyModel, garment: GarmentLayer, new_body: BodyLayer,
                  pose_preset: np.ndarray | None = None) -> np.ndarray:
    """Re-apply stored garment offsets verbatim on an edited body."""
    body_mesh = compose_body(model, new_body, pose_preset)
    return compose_clothed(body_mesh, garment)


def new_garment(model: BodyModel, garment_type: GarmentType,
                layer_order: int = 0, albedo_ref: str = "clothes") -> GarmentLayer:
    """Fresh zero-offset garment from the type's mask template."""
    mask = garment_mask_template(model, garment_type)
    return GarmentLayer(
        garment_type=garment_type,
        mask=mask,
        offsets=np.zeros((model.vertex_count, 3)),
        albedo_ref=albedo_ref,
        layer_order=layer_order,
    )
