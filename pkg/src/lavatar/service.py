"""HTTP compose service for the try-on editor.

Serves an immutable on-disk asset store: one body-model container plus any
number of avatar/garment assets. Endpoints list assets, compose an avatar
with an ordered garment stack (optionally overriding the shape coefficients
or applying a pose preset) into binary glTF, and render PNG previews.
Responses are pure functions of (store, request).
"""

from __future__ import annotations

import base64
import hashlib
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .appearance import ShadingConfig
from .assets import AvatarAsset, GarmentAsset, load_asset, model_hash
from .bodymodel import BodyModel, lbs, load_body_model, regress_joints, blend_shapes
from .camera import orbit_camera
from .config import resolve_pose_preset
from .export import export_glb, skin_from_model
from .images import png_bytes
from .layering import BodyLayer, a_pose_params, compose_body, compose_layers
from .renderer import rasterize


class StoreError(ValueError):
    pass


class AssetStore:
    """Read-only view of an asset directory: model.sosm + *.sosm assets."""

    def __init__(self, asset_dir: str | Path):
        self.root = Path(asset_dir)
        model_path = self.root / "model.sosm"
        if not model_path.exists():
            raise StoreError(f"no body model at {model_path}")
        self.model: BodyModel = load_body_model(model_path.read_bytes())
        self.model_ref = model_hash(self.model)
        self.avatars: dict[str, AvatarAsset] = {}
        self.garments: dict[str, GarmentAsset] = {}
        for path in sorted(self.root.glob("*.sosm")):
            if path.name == "model.sosm":
                continue
            asset = load_asset(path.read_bytes(), self.model)
            if isinstance(asset, AvatarAsset):
                self.avatars[path.stem] = asset
            else:
                self.garments[path.stem] = asset


def compose_from_store(store: AssetStore, avatar_id: str, garment_ids: list[str],
                       beta_override: list[float] | None = None,
                       pose_preset: str = "a_pose"):
    """Compose the layered mesh + vertex colors + stats for one request."""
    if avatar_id not in store.avatars:
        raise HTTPException(status_code=404, detail=f"unknown avatar {avatar_id!r}")
    missing = [g for g in garment_ids if g not in store.garments]
    if missing:
        raise HTTPException(status_code=404, detail=f"unknown garments {missing}")
    avatar = store.avatars[avatar_id]
    garments = [store.garments[g] for g in garment_ids]

    orders = [g.garment.layer_order for g in garments]
    if len(set(orders)) != len(orders):
        raise HTTPException(status_code=422, detail=f"duplicate layer orders {orders}")

    beta = avatar.body.beta
    if beta_override is not None:
        beta = np.asarray(beta_override, dtype=np.float64)
        if beta.shape != avatar.body.beta.shape:
            raise HTTPException(
                status_code=422,
                detail=f"betaOverride length {beta.shape[0]} != {avatar.body.beta.shape[0]}")
    body = BodyLayer(beta=beta, offsets=avatar.body.offsets, albedo_ref=avatar.body.albedo_ref)

    model = store.model
    try:
        preset = resolve_pose_preset(pose_preset, model.joint_count)
    except KeyError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    layers = sorted((g.garment for g in garments), key=lambda g: g.layer_order)
    body_mesh = compose_body(model, body)
    meshes = compose_layers(body_mesh, list(layers))
    composed = meshes[-1]

    colors = avatar.albedo.evaluate(body_mesh)
    for g, mesh_after in zip(garments, meshes[1:]):
        sel = g.garment.mask == 1
        colors[sel] = g.albedo.evaluate(mesh_after[sel])

    shaped = blend_shapes(model, a_pose_params(model, beta, None))
    joints = regress_joints(model, shaped)
    final = composed if not preset.any() else lbs(composed, joints, preset, model)

    skin = skin_from_model(model, joints)
    glb = export_glb(final, model.faces, colors, skin, name=avatar_id)
    stats = {
        "vertexCount": int(final.shape[0]),
        "faceCount": int(model.faces.shape[0]),
        "layerCount": len(garments),
        "layers": [{
            "id": gid,
            "garmentType": store.garments[gid].garment.garment_type.value,
            "layerOrder": store.garments[gid].garment.layer_order,
            "maskedVertexCount": int(store.garments[gid].garment.mask.sum()),
        } for gid in garment_ids],
        "glbSha256": hashlib.sha256(glb).hexdigest(),
    }
    return glb, stats, (final, colors)


class ComposeRequest(BaseModel):
    avatarId: str
    garmentIds: list[str] = Field(default_factory=list)
    betaOverride: list[float] | None = None
    posePreset: str = "a_pose"
    renderOptions: dict | None = None


def create_app(asset_dir: str | Path, cors_origins: list[str] | None = None) -> FastAPI:
    store = AssetStore(asset_dir)
    app = FastAPI(title="lavatar compose service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins if cors_origins is not None else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    @app.get("/health")
    def health():
        return {"status": "ok", "modelRef": store.model_ref[:12]}

    @app.get("/avatars")
    def avatars():
        return {"avatars": [{
            "id": aid,
            "betaLength": int(a.body.beta.shape[0]),
            "beta": [float(b) for b in a.body.beta],
            "vertexCount": store.model.vertex_count,
            "provenance": a.provenance,
        } for aid, a in sorted(store.avatars.items())]}

    @app.get("/garments")
    def garments():
        return {"garments": [{
            "id": gid,
            "garmentType": g.garment.garment_type.value,
            "layerOrder": g.garment.layer_order,
            "maskedVertexCount": int(g.garment.mask.sum()),
            "provenance": g.provenance,
        } for gid, g in sorted(store.garments.items())]}

    @app.post("/compose")
    def compose(req: ComposeRequest, format: str = Query("json")):
        glb, stats, _ = compose_from_store(store, req.avatarId, req.garmentIds,
                                           req.betaOverride, req.posePreset)
        if format == "binary":
            return Response(content=glb, media_type="model/gltf-binary",
                            headers={"X-Compose-Stats": str(stats["vertexCount"])})
        return {"stats": stats, "glb": base64.b64encode(glb).decode("ascii")}

    @app.get("/render")
    def render(avatarId: str, garmentIds: str = "", azimuth: float = 0.0,
               elevation: float = 10.0, distance: float = 2.0, size: int = 256,
               posePreset: str = "a_pose"):
        ids = [g for g in garmentIds.split(",") if g]
        if size < 8 or size > 1024:
            raise HTTPException(status_code=422, detail="size must be in [8, 1024]")
        _, _, (mesh, colors) = compose_from_store(store, avatarId, ids,
                                                  None, posePreset)
        center = 0.5 * (mesh.min(axis=0) + mesh.max(axis=0))
        cam = orbit_camera(center, azimuth, elevation, distance, width=size, height=size)
        light = ShadingConfig(light_position=cam.position + np.array([0.5, 1.0, 0.5]),
                              diffuse=np.full(3, 0.45), ambient=np.full(3, 0.7))
        out = rasterize(mesh, store.model.faces, colors, None, light, cam,
                        background=(1.0, 1.0, 1.0))
        return Response(content=png_bytes(out.rgb), media_type="image/png")

    return app


def run_server(asset_dir: str | Path, host: str = "127.0.0.1", port: int = 8321):
    import uvicorn
    uvicorn.run(create_app(asset_dir), host=host, port=port, log_level="warning")
