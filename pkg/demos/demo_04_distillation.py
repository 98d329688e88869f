"""Guidance-driven generation at desk scale, end to end.

A known avatar renders eight target views; the target-image oracle turns
them into a guidance signal and stage one recovers the appearance (and
gently nudges geometry) from scratch. A vest layer then trains on the
frozen body in stage two. Runs a few hundred steps per stage, about two
minutes total; real generation would point the remote oracle at a
diffusion service instead and run the full default step counts.
"""

from pathlib import Path

import numpy as np

from lavatar.appearance import AlbedoField, ShadingConfig
from lavatar.assets import AvatarAsset, GarmentAsset, model_hash, save_asset
from lavatar.bodymodel import generate_test_body
from lavatar.camera import orbit_camera
from lavatar.config import LossWeights, StageConfig
from lavatar.distillation import (LayerDispatchOracle, TargetImageOracle,
                                  make_target_image_oracle, render_target_views,
                                  run_stage1, run_stage2, target_key)
from lavatar.images import write_png
from lavatar.layering import (BodyLayer, GarmentType, compose_body, compose_clothed,
                              garment_faces, new_garment)
from lavatar.renderer import (blend_images, compute_vertex_normals, layer_pixel_mask,
                              rasterize)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

model = generate_test_body(seed=7, detail=0)
V = model.vertex_count
light = ShadingConfig(light_position=np.array([2.0, 3.0, 2.5]),
                      diffuse=np.full(3, 0.6), ambient=np.full(3, 0.55))
bg = (0.5, 0.5, 0.5)

# ---- stage one: recover a colorful avatar from its own renders ------------
gt_body = BodyLayer(beta=np.array([0.02, 0.02, 0.015, 0.02]),
                    offsets=np.zeros((V, 3)))
gt_albedo = AlbedoField.for_points(model.template, num_bands=4, hidden=(32, 32),
                                   seed=11, final_zero=False)
sizes = gt_albedo.layer_sizes
gt_albedo.params[-(sizes[-2] * sizes[-1] + sizes[-1]):] *= 5.0
gt_mesh = compose_body(model, gt_body)
center = 0.5 * (gt_mesh.min(axis=0) + gt_mesh.max(axis=0))
views = render_target_views(gt_mesh, model.faces, gt_albedo, gt_mesh, light, center,
                            azimuths=range(-180, 180, 45), distance=2.0, fov=47.5,
                            size=64, background=bg)
oracle = make_target_image_oracle({k: v.rgb for k, v in views.items()}, eta=1.0,
                                  normal_targets={k: v.normal_map
                                                  for k, v in views.items()})

body = BodyLayer(beta=np.zeros(model.num_shape_params), offsets=np.zeros((V, 3)))
albedo = AlbedoField.for_points(model.template, num_bands=4, hidden=(32, 32), seed=0)
cfg1 = StageConfig(steps=500, image_size=64, close_up_probability=0.0,
                   azimuth_snap_deg=45.0, distance_range=(2.0, 2.0),
                   fov_range=(47.5, 47.5), elevation_range=(0.0, 0.0),
                   light_mode="fixed", fixed_light_position=(2.0, 3.0, 2.5),
                   fixed_light_diffuse=0.6, fixed_light_ambient=0.55,
                   rng_seed=5, lr_beta=2e-5, lr_offsets=5e-5, background=bg,
                   geometry_warmup_steps=150, albedo_probe_count=128,
                   loss_weights=LossWeights(rgb=1.0, normal=0.25, albedo_smooth=0.05,
                                            laplacian=2.0, offset=1.0))
res1 = run_stage1(model, body, albedo, oracle, cfg1)
print(f"stage one: {res1.steps_run} steps, "
      f"guidance residual {res1.trace[0]['sds_rgb']:.4f} -> {res1.trace[-1]['sds_rgb']:.4f}")

avatar = AvatarAsset(model_ref=model_hash(model), body=body, albedo=albedo,
                     provenance={"demo": "stage1"})
(OUT / "demo_avatar.sosm").write_bytes(save_asset(avatar))

# ---- stage two: a striped vest on the frozen body -------------------------
body_mesh = compose_body(model, body)
gt_vest = new_garment(model, GarmentType.VEST)
normals = compute_vertex_normals(body_mesh, model.faces)
gt_vest.offsets[gt_vest.mask == 1] = 0.003 * normals[gt_vest.mask == 1]
gt_vest.project()
gt_clothed = compose_clothed(body_mesh, gt_vest)
frac = 0.5 + 0.5 * np.sin(12.0 * gt_clothed[:, 1])
stripes = np.stack([np.full(V, 0.85), 0.15 + 0.7 * frac, 0.15 + 0.7 * frac], axis=1)

keep = np.where(gt_vest.mask == 1)[0]
fmask = garment_faces(gt_vest, model.faces)
remap = -np.ones(V, dtype=np.int64)
remap[keep] = np.arange(keep.size)
sub_faces = remap[model.faces[fmask]]
grey = np.full((V, 3), 0.5)
ic_t, nc_t, ich_t, nch_t = {}, {}, {}, {}
for az in range(-180, 180, 45):
    cam = orbit_camera(center, az, 0.0, 2.0, 47.5, 64, 64)
    out_c = rasterize(gt_clothed[keep], sub_faces, stripes[keep], None, light, cam, bg)
    out_h = rasterize(body_mesh, model.faces, albedo, body_mesh, light, cam, bg)
    m2d = layer_pixel_mask(rasterize(gt_clothed, model.faces, grey, None, light, cam, bg),
                           fmask)
    k = target_key(az, 0)
    ic_t[k], nc_t[k] = out_c.rgb, out_c.normal_map
    ich_t[k] = blend_images(out_c.rgb, out_h.rgb, m2d)
    nch_t[k] = blend_images(out_c.normal_map, out_h.normal_map, m2d)

oracle2 = LayerDispatchOracle({
    "clothes": TargetImageOracle(ic_t, eta=1.0, normal_targets=nc_t),
    "clothed": TargetImageOracle(ich_t, eta=1.0, normal_targets=nch_t),
})
vest = new_garment(model, GarmentType.VEST)
vest_albedo = AlbedoField.for_points(model.template, num_bands=4, hidden=(32, 32), seed=1)
cfg2 = StageConfig(steps=400, image_size=64, close_up_probability=0.0,
                   azimuth_snap_deg=45.0, distance_range=(2.0, 2.0),
                   fov_range=(47.5, 47.5), elevation_range=(0.0, 0.0),
                   light_mode="fixed", fixed_light_position=(2.0, 3.0, 2.5),
                   fixed_light_diffuse=0.6, fixed_light_ambient=0.55,
                   rng_seed=9, lr_offsets=5e-5, background=bg, geometry_warmup_steps=100,
                   albedo_probe_count=96, prompt_id="clothes",
                   loss_weights=LossWeights(rgb=1.0, normal=0.25, albedo_smooth=0.05,
                                            laplacian=1.0, offset=0.3))
res2 = run_stage2(model, body, albedo, vest, vest_albedo, oracle2, cfg2)
print(f"stage two: {res2.steps_run} steps, clothes guidance residual "
      f"{res2.trace[0]['sds_rgb_clothes']:.4f} -> {res2.trace[-1]['sds_rgb_clothes']:.4f}")
(OUT / "demo_vest.sosm").write_bytes(save_asset(
    GarmentAsset(model_ref=model_hash(model), garment=vest, albedo=vest_albedo,
                 provenance={"demo": "stage2"})))

# preview the result
clothed = compose_clothed(body_mesh, vest)
colors = albedo.evaluate(body_mesh)
colors[keep] = vest_albedo.evaluate(clothed[keep])
cam = orbit_camera(center, 25.0, 8.0, 2.0, 47.5, 256, 256)
write_png(OUT / "demo_clothed.png",
          rasterize(clothed, model.faces, colors, None, light, cam, bg).rgb)
print(f"wrote assets and preview to {OUT}")
