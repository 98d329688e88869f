"""The differentiable rasterizer: images out, gradients back.

Renders the body with an albedo field under a point light, writes the RGB,
normal-map and depth planes, renders the skeleton condition map, and pushes
a pixel gradient backward to vertex positions, albedo parameters and the
light.
"""

from pathlib import Path

import numpy as np

from lavatar.appearance import AlbedoField, ShadingConfig, sample_light
from lavatar.bodymodel import generate_test_body, regress_joints
from lavatar.camera import orbit_camera
from lavatar.images import write_png
from lavatar.renderer import backward_render, rasterize, render_pose_map

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

model = generate_test_body(seed=7, detail=1)
mesh = model.template
field = AlbedoField.for_points(mesh, num_bands=6, seed=3, final_zero=False)
center = 0.5 * (mesh.min(axis=0) + mesh.max(axis=0))
camera = orbit_camera(center, azimuth_deg=30.0, elevation_deg=10.0, distance=2.0,
                      width=256, height=256)
light = sample_light(np.random.default_rng(4), camera)

out = rasterize(mesh, model.faces, field, mesh, light, camera)
print(f"coverage: {int(out.coverage.sum())} of {256 * 256} pixels")
write_png(OUT / "render_rgb.png", out.rgb)
write_png(OUT / "render_normals.png", out.normal_map)
depth = out.depth.copy()
finite = np.isfinite(depth)
depth[~finite] = depth[finite].max()
write_png(OUT / "render_depth.png",
          np.repeat(((depth - depth.min()) / np.ptp(depth))[..., None], 3, axis=2))

joints = regress_joints(model, mesh)
write_png(OUT / "pose_map.png", render_pose_map(joints, model.parents, camera))

# backward: gradient of the mean image intensity
d_rgb = np.full_like(out.rgb, 1.0 / out.rgb.size)
grads = backward_render(out, d_rgb, np.zeros_like(out.normal_map))
print(f"d(mean intensity)/d(vertices): max |g| = {np.abs(grads['d_vertices']).max():.2e}")
print(f"d(mean intensity)/d(albedo params): |g| = {np.linalg.norm(grads['d_albedo_params']):.2e}")
print(f"d(mean intensity)/d(light position): {grads['d_light_position'].round(6)}")
print(f"wrote images to {OUT}")
