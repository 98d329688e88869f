"""Animation and export: pose sequences drive the clothed avatar.

Loads the assets written by demo 04 (or builds plain ones), plays a short
arm-raise sequence, writes glTF frames plus a rendered strip, and exports
the garment alone for external simulation tools.
"""

from pathlib import Path

import numpy as np

from lavatar.appearance import AlbedoField, ShadingConfig
from lavatar.assets import (AvatarAsset, GarmentAsset, PoseSequence, animate,
                            load_asset, model_hash, pose_sequence_to_json)
from lavatar.bodymodel import generate_test_body, regress_joints
from lavatar.camera import orbit_camera
from lavatar.export import export_glb, export_obj, skin_from_model
from lavatar.images import write_png
from lavatar.layering import (BodyLayer, GarmentType, compose_body, compose_clothed,
                              extract_clothes, new_garment)
from lavatar.renderer import compute_vertex_normals, rasterize

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

model = generate_test_body(seed=7, detail=0)
ref = model_hash(model)

avatar_path = OUT / "demo_avatar.sosm"
vest_path = OUT / "demo_vest.sosm"
if avatar_path.exists() and vest_path.exists():
    avatar = load_asset(avatar_path.read_bytes(), model)
    vest_asset = load_asset(vest_path.read_bytes(), model)
    print("using assets from demo 04")
else:
    body = BodyLayer(beta=np.zeros(model.num_shape_params),
                     offsets=np.zeros((model.vertex_count, 3)))
    albedo = AlbedoField.for_points(model.template, num_bands=3, hidden=(16,), seed=2,
                                    final_zero=False)
    avatar = AvatarAsset(model_ref=ref, body=body, albedo=albedo)
    vest = new_garment(model, GarmentType.VEST)
    normals = compute_vertex_normals(compose_body(model, body), model.faces)
    vest.offsets[vest.mask == 1] = 0.01 * normals[vest.mask == 1]
    vest_asset = GarmentAsset(model_ref=ref, garment=vest,
                              albedo=AlbedoField.for_points(model.template, seed=3,
                                                            final_zero=False))
    print("built plain placeholder assets")

# a 24-frame left-arm raise with a slow body turn
frames_n = 24
rots = np.zeros((frames_n, model.joint_count, 3))
rots[:, 4, 2] = np.linspace(0.0, -1.1, frames_n)   # left shoulder
rots[:, 0, 1] = np.linspace(0.0, 0.6, frames_n)    # root turn
seq = PoseSequence(fps=12.0, rotations=rots, translations=np.zeros((frames_n, 3)))
(OUT / "arm_raise.pose.json").write_text(pose_sequence_to_json(seq))

frames = animate(model, avatar, [vest_asset], seq)
motion = np.linalg.norm(frames[-1] - frames[0], axis=1)
print(f"{len(frames)} frames; final-frame max vertex travel {motion.max():.3f} m")

body_mesh = compose_body(model, avatar.body)
colors = avatar.albedo.evaluate(body_mesh)
clothed0 = compose_clothed(body_mesh, vest_asset.garment)
sel = vest_asset.garment.mask == 1
colors[sel] = vest_asset.albedo.evaluate(clothed0[sel])
skin = skin_from_model(model, regress_joints(model, body_mesh))

strip = []
light = ShadingConfig(light_position=np.array([2.0, 3.0, 2.0]),
                      diffuse=np.full(3, 0.5), ambient=np.full(3, 0.6))
for i in (0, frames_n // 2, frames_n - 1):
    (OUT / f"anim_frame_{i:02d}.glb").write_bytes(
        export_glb(frames[i], model.faces, colors, skin))
    center = 0.5 * (frames[i].min(axis=0) + frames[i].max(axis=0))
    cam = orbit_camera(center, 20.0, 10.0, 2.2, 47.5, 192, 192)
    strip.append(rasterize(frames[i], model.faces, colors, None, light, cam).rgb)
write_png(OUT / "anim_strip.png", np.concatenate(strip, axis=1))

# hand the garment mesh to external tools
sub = extract_clothes(clothed0, vest_asset.garment, model.faces, model)
(OUT / "vest_for_simulation.obj").write_bytes(
    export_obj(sub.vertices, sub.faces, vest_asset.albedo.evaluate(sub.vertices)))
print(f"wrote animation frames, strip and garment export to {OUT}")
