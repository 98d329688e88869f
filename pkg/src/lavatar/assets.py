"""Avatar/garment asset persistence, pose sequences, and animation.

Assets serialize into the same named-array container as body models. Every
asset records the SHA-256 of the body-model container it was built on and
refuses to compose against a different model. Pose sequences are a minimal
JSON format (fps + per-frame axis-angle joint rotations and optional root
translation); cloth moves with the body by inheriting the body's skinning
weights on their shared topology.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container as ct
from .appearance import AlbedoField
from .bodymodel import BodyModel, lbs, regress_joints, save_body_model, blend_shapes
from .layering import (BodyLayer, GarmentLayer, GarmentType, a_pose_params,
                       compose_body, compose_layers)


class AssetError(ValueError):
    pass


def model_hash(model: BodyModel) -> str:
    return hashlib.sha256(save_body_model(model)).hexdigest()


def _albedo_meta(albedo: AlbedoField) -> dict:
    return {
        "num_bands": albedo.num_bands,
        "layer_sizes": list(albedo.layer_sizes),
        "center": [float(c) for c in albedo.center],
        "half_extent": float(albedo.half_extent),
    }


def _albedo_from(meta: dict, params: np.ndarray) -> AlbedoField:
    return AlbedoField(num_bands=int(meta["num_bands"]),
                       layer_sizes=[int(s) for s in meta["layer_sizes"]],
                       params=params.astype(np.float64),
                       center=np.asarray(meta["center"], dtype=np.float64),
                       half_extent=float(meta["half_extent"]))


@dataclass
class AvatarAsset:
    model_ref: str
    body: BodyLayer
    albedo: AlbedoField
    provenance: dict = field(default_factory=dict)

    kind = "avatar"


@dataclass
class GarmentAsset:
    model_ref: str
    garment: GarmentLayer
    albedo: AlbedoField
    provenance: dict = field(default_factory=dict)

    kind = "garment"


def save_asset(asset: AvatarAsset | GarmentAsset) -> bytes:
    meta = {
        "kind": asset.kind,
        "model_ref": asset.model_ref,
        "albedo": _albedo_meta(asset.albedo),
        "provenance": asset.provenance,
    }
    arrays: dict[str, np.ndarray] = {}
    if isinstance(asset, AvatarAsset):
        arrays["beta"] = asset.body.beta.astype(np.float32)
        arrays["offsets"] = asset.body.offsets.astype(np.float32)
        meta["albedo_ref"] = asset.body.albedo_ref
    else:
        g = asset.garment
        g.validate(g.mask.shape[0])
        arrays["mask"] = g.mask.astype(np.int32)
        arrays["offsets"] = g.offsets.astype(np.float32)
        meta["garment_type"] = g.garment_type.value
        meta["layer_order"] = g.layer_order
        meta["albedo_ref"] = g.albedo_ref
    arrays["albedo_params"] = asset.albedo.params.astype(np.float32)
    arrays["metadata"] = ct.pack_json(meta)
    return ct.write_container(arrays)


def load_asset(stream: bytes, model: BodyModel | None = None):
    """Parse an asset container; verifies the model reference when given."""
    arrays = ct.read_container(stream)
    if "metadata" not in arrays:
        raise AssetError("asset container has no metadata blob")
    meta = ct.unpack_json(arrays["metadata"])
    if model is not None and meta["model_ref"] != model_hash(model):
        raise AssetError(
            f"asset was built on model {meta['model_ref'][:12]}..., "
            f"got a different model container")
    albedo = _albedo_from(meta["albedo"], arrays["albedo_params"])
    if meta["kind"] == "avatar":
        body = BodyLayer(beta=arrays["beta"].astype(np.float64),
                         offsets=arrays["offsets"].astype(np.float64),
                         albedo_ref=meta.get("albedo_ref", "body"))
        return AvatarAsset(meta["model_ref"], body, albedo, meta.get("provenance", {}))
    if meta["kind"] == "garment":
        garment = GarmentLayer(
            garment_type=GarmentType(meta["garment_type"]),
            mask=arrays["mask"].astype(np.int64),
            offsets=arrays["offsets"].astype(np.float64),
            albedo_ref=meta.get("albedo_ref", "clothes"),
            layer_order=int(meta["layer_order"]),
        )
        garment.validate(garment.mask.shape[0])
        return GarmentAsset(meta["model_ref"], garment, albedo, meta.get("provenance", {}))
    raise AssetError(f"unknown asset kind {meta['kind']!r}")


# ---------------------------------------------------------------------------
# Pose sequences
# ---------------------------------------------------------------------------

@dataclass
class PoseSequence:
    fps: float
    rotations: np.ndarray       # (T, J, 3) axis-angle
    translations: np.ndarray    # (T, 3) root translation

    @property
    def frame_count(self) -> int:
        return self.rotations.shape[0]


def pose_sequence_to_json(seq: PoseSequence) -> str:
    frames = []
    for i in range(seq.frame_count):
        frames.append({
            "rots": [[float(c) for c in row] for row in seq.rotations[i]],
            "trans": [float(c) for c in seq.translations[i]],
        })
    return json.dumps({"fps": seq.fps, "frames": frames})


def pose_sequence_from_json(text: str) -> PoseSequence:
    data = json.loads(text)
    frames = data["frames"]
    if not frames:
        raise AssetError("pose sequence has no frames")
    rots = np.asarray([f["rots"] for f in frames], dtype=np.float64)
    trans = np.asarray([f.get("trans", [0.0, 0.0, 0.0]) for f in frames], dtype=np.float64)
    return PoseSequence(fps=float(data.get("fps", 30.0)), rotations=rots, translations=trans)


def load_pose_sequence(path: str | Path) -> PoseSequence:
    return pose_sequence_from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# Animation
# ---------------------------------------------------------------------------

def animate(model: BodyModel, avatar: AvatarAsset, garments: list[GarmentAsset],
            seq: PoseSequence, pose_preset: np.ndarray | None = None) -> list[np.ndarray]:
    """Per-frame posed meshes of the fully-composed avatar.

    The layered rest mesh is composed once, then warped by linear blend
    skinning with each frame's pose; garment vertices ride on the body's
    skinning weights. Joints are regressed from the shaped template
    (offsets excluded), the usual skeleton semantics.
    """
    ref = model_hash(model)
    for a in [avatar, *garments]:
        if a.model_ref != ref:
            raise AssetError("asset/model mismatch in animate")
    if seq.rotations.shape[1] != model.joint_count:
        raise AssetError(
            f"pose sequence has {seq.rotations.shape[1]} joints, model has {model.joint_count}")

    rest = compose_body(model, avatar.body, pose_preset)
    layers = sorted((g.garment for g in garments), key=lambda g: g.layer_order)
    composed = compose_layers(rest, list(layers))[-1]
    shaped = blend_shapes(model, a_pose_params(model, avatar.body.beta, None))
    joints = regress_joints(model, shaped)

    frames = []
    for i in range(seq.frame_count):
        posed = lbs(composed, joints, seq.rotations[i], model)
        frames.append(posed + seq.translations[i])
    return frames
