"""Two-stage guidance-driven optimization of layered avatars.

Stage one trains the unclothed body (shape coefficients, vertex offsets,
albedo field) against a guidance oracle; stage two freezes the body and
trains one garment layer (masked offsets + its own albedo field) using
gradients from both the clothes-only renders and the blended clothed-human
renders. Oracles are pluggable: a verifiable target-image surrogate and an
echo oracle live here, the HTTP-backed oracle in `remote`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .appearance import AlbedoField, ShadingConfig, sample_light
from .bodymodel import BodyModel, regress_joints
from .camera import Camera
from .config import SceneAnchors, StageConfig, resolve_pose_preset
from .layering import BodyLayer, GarmentLayer, compose_body, compose_clothed, garment_faces
from .objectives import (GuidanceRequest, albedo_smoothness_loss, build_adjacency,
                         laplacian_loss, offset_loss, sds_pixel_gradient)
from .optim import Adam
from .renderer import (RenderOutput, backward_render, blend_images, layer_pixel_mask,
                       rasterize, render_pose_map)


class CloseUp(enum.Enum):
    NONE = "none"
    FACE = "face"
    HANDS = "hands"


# ---------------------------------------------------------------------------
# Camera sampling
# ---------------------------------------------------------------------------

def sample_camera(rng: np.random.Generator, cfg: StageConfig,
                  close_up: CloseUp = CloseUp.NONE) -> Camera:
    """Random orbit camera: azimuth/distance/FoV/elevation uniform in the
    configured ranges; close-ups retarget to the head or a hand at 0.4x
    distance."""
    azimuth = rng.uniform(*cfg.azimuth_range)
    if cfg.azimuth_snap_deg:
        azimuth = round(azimuth / cfg.azimuth_snap_deg) * cfg.azimuth_snap_deg
        azimuth = ((azimuth + 180.0) % 360.0) - 180.0
    distance = rng.uniform(*cfg.distance_range)
    fov = rng.uniform(*cfg.fov_range)
    elevation = rng.uniform(*cfg.elevation_range)

    anchors = cfg.anchors
    if close_up == CloseUp.FACE:
        target = np.asarray(anchors.head, dtype=np.float64)
        distance *= 0.4
    elif close_up == CloseUp.HANDS:
        hand = anchors.left_hand if rng.integers(2) == 0 else anchors.right_hand
        target = np.asarray(hand, dtype=np.float64)
        distance *= 0.4
    else:
        target = np.asarray(anchors.center, dtype=np.float64) + np.array(
            [0.0, cfg.garment_vertical_bias, 0.0])

    az, el = np.deg2rad(azimuth), np.deg2rad(elevation)
    offset = distance * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    return Camera(position=target + offset, target=target, fov_deg=fov,
                  width=cfg.image_size, height=cfg.image_size)


def camera_azimuth_elevation(camera: Camera) -> tuple[float, float]:
    """Recover orbit angles (degrees) from a camera's position/target."""
    v = camera.position - camera.target
    dist = np.linalg.norm(v)
    el = np.rad2deg(np.arcsin(np.clip(v[1] / dist, -1.0, 1.0)))
    az = np.rad2deg(np.arctan2(v[0], v[2]))
    return float(az), float(el)


def scene_anchors_for(model: BodyModel, rest_mesh: np.ndarray) -> SceneAnchors:
    """Camera targets derived from the current body: bbox center, head joint
    (highest), hand joints (leaf joints furthest out sideways)."""
    joints = regress_joints(model, rest_mesh)
    center = 0.5 * (rest_mesh.min(axis=0) + rest_mesh.max(axis=0))
    head = joints[int(np.argmax(joints[:, 1]))]
    children = set(int(p) for p in model.parents if p >= 0)
    leaves = [j for j in range(model.joint_count) if j not in children]
    by_x = sorted(leaves, key=lambda j: joints[j, 0])
    left = joints[by_x[-1]] if leaves else center
    right = joints[by_x[0]] if leaves else center
    return SceneAnchors(center=center, head=head, left_hand=left, right_hand=right)


# ---------------------------------------------------------------------------
# Guidance oracles
# ---------------------------------------------------------------------------

class GuidanceOracle:
    """Callable (GuidanceRequest) -> predicted-noise image."""

    needs_condition: bool = False
    deterministic: bool = True

    def __call__(self, req: GuidanceRequest) -> np.ndarray:
        raise NotImplementedError


class EchoOracle(GuidanceOracle):
    """Returns the injected noise; the distillation gradient vanishes."""

    def __call__(self, req: GuidanceRequest) -> np.ndarray:
        return req.noise.copy()


def target_key(azimuth_deg: float, elevation_deg: float,
               azimuth_step: float = 45.0, elevation_step: float = 30.0) -> tuple[int, int]:
    az = ((azimuth_deg + 180.0) % 360.0) - 180.0
    az_b = round(az / azimuth_step) * azimuth_step
    if az_b == 180.0:
        az_b = -180.0
    el_b = round(elevation_deg / elevation_step) * elevation_step
    return int(az_b), int(el_b)


class TargetImageOracle(GuidanceOracle):
    """Desk-scale guidance: pushes renders toward per-view target images.

    eps_hat = eps + eta * (image - target[bucket]), so the distillation
    gradient is eta * (image - target). Buckets quantize camera azimuth and
    elevation; a missing bucket falls back to the nearest stored one and
    increments `missing_bucket_count`. Normal-map requests use
    `normal_targets` when given and produce zero gradient otherwise.
    """

    def __init__(self, targets: dict[tuple[int, int], np.ndarray], eta: float = 1.0,
                 azimuth_step: float = 45.0, elevation_step: float = 30.0,
                 normal_targets: dict[tuple[int, int], np.ndarray] | None = None):
        if not targets:
            raise ValueError("target oracle needs at least one target view")
        self.targets = {k: np.asarray(v, dtype=np.float64) for k, v in targets.items()}
        self.normal_targets = ({k: np.asarray(v, dtype=np.float64)
                                for k, v in normal_targets.items()}
                               if normal_targets else None)
        self.eta = float(eta)
        self.azimuth_step = azimuth_step
        self.elevation_step = elevation_step
        self.missing_bucket_count = 0

    def _lookup(self, table, az: float, el: float) -> np.ndarray:
        key = target_key(az, el, self.azimuth_step, self.elevation_step)
        if key in table:
            return table[key]
        self.missing_bucket_count += 1

        def angdist(k):
            d_az = abs(((k[0] - key[0]) + 180.0) % 360.0 - 180.0)
            return d_az + abs(k[1] - key[1])

        nearest = min(table, key=angdist)
        return table[nearest]

    def __call__(self, req: GuidanceRequest) -> np.ndarray:
        if req.kind == "normal" and self.normal_targets is None:
            return req.noise.copy()
        if req.azimuth_deg is None or req.elevation_deg is None:
            raise ValueError("target oracle needs camera azimuth/elevation on the request")
        table = self.normal_targets if req.kind == "normal" else self.targets
        target = self._lookup(table, req.azimuth_deg, req.elevation_deg)
        if target.shape != req.image.shape:
            raise ValueError(f"target shape {target.shape} != image {req.image.shape}")
        return req.noise + self.eta * (req.image - target)


class LayerDispatchOracle(GuidanceOracle):
    """Routes requests to per-layer oracles ("body" / "clothes" / "clothed")."""

    def __init__(self, by_layer: dict[str, GuidanceOracle]):
        self.by_layer = dict(by_layer)
        self._echo = EchoOracle()

    @property
    def needs_condition(self):  # type: ignore[override]
        return any(o.needs_condition for o in self.by_layer.values())

    def __call__(self, req: GuidanceRequest) -> np.ndarray:
        return self.by_layer.get(req.layer, self._echo)(req)


def make_target_image_oracle(targets: dict[tuple[int, int], np.ndarray], eta: float = 1.0,
                             azimuth_step: float = 45.0, elevation_step: float = 30.0,
                             normal_targets: dict[tuple[int, int], np.ndarray] | None = None,
                             ) -> TargetImageOracle:
    return TargetImageOracle(targets, eta, azimuth_step, elevation_step, normal_targets)


# ---------------------------------------------------------------------------
# Stage loops
# ---------------------------------------------------------------------------

@dataclass
class StageResult:
    trace: list[dict]
    checkpoints: list[dict]
    aborted: bool = False
    steps_run: int = 0


def _light_for(rng, cfg: StageConfig, camera) -> ShadingConfig:
    if cfg.light_mode == "random":
        return sample_light(rng, camera)
    if cfg.light_mode == "ambient":
        return ShadingConfig.ambient_only(cfg.ambient_level)
    if cfg.light_mode == "fixed":
        return ShadingConfig(light_position=np.asarray(cfg.fixed_light_position),
                             diffuse=np.full(3, cfg.fixed_light_diffuse),
                             ambient=np.full(3, cfg.fixed_light_ambient))
    raise ValueError(f"unknown light mode {cfg.light_mode!r}")


def _draw_close_up(rng, cfg: StageConfig) -> CloseUp:
    u = rng.random()
    if u < 0.5 * cfg.close_up_probability:
        return CloseUp.FACE
    if u < cfg.close_up_probability:
        return CloseUp.HANDS
    return CloseUp.NONE


def _guidance(rng, oracle, cfg, image, condition, az, el, weight,
              kind="rgb", layer="body"):
    t = rng.uniform(*cfg.t_range)
    eps = rng.standard_normal(image.shape)
    req = GuidanceRequest(image=image, noise=eps, prompt_id=cfg.prompt_id, t=t,
                          condition_image=condition, noising=cfg.noising,
                          azimuth_deg=az, elevation_deg=el, kind=kind, layer=layer)
    return weight * sds_pixel_gradient(oracle, req)


def _finite(*arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


def _snapshot(step: int, params: dict[str, np.ndarray]) -> dict:
    snap = {k: v.copy() for k, v in params.items()}
    snap["step"] = step
    return snap


def _restore(params: dict[str, np.ndarray], snap: dict) -> None:
    for k, v in params.items():
        v[...] = snap[k]


def run_stage1(model: BodyModel, body: BodyLayer, albedo: AlbedoField,
               oracle: GuidanceOracle, cfg: StageConfig) -> StageResult:
    """Train {beta, body offsets, body albedo} by distillation.

    Per step: sample camera and light, compose the body at the generation
    stance, render RGB + normal map (+ skeleton condition map if the oracle
    wants one), fetch guidance gradients for both images, push them through
    the renderer backward pass, add geometry and albedo regularizer
    gradients, and take an Adam step with per-group learning rates.
    """
    cfg = replace(cfg, anchors=SceneAnchors())
    rng = np.random.default_rng(cfg.rng_seed)
    faces = model.faces
    adjacency = build_adjacency(faces, model.vertex_count)
    preset = resolve_pose_preset(cfg.pose_preset, model.joint_count)
    w = cfg.loss_weights

    params = {"beta": body.beta, "offsets": body.offsets, "texture": albedo.params}
    opt = Adam(params, {"beta": cfg.lr_beta, "offsets": cfg.lr_offsets,
                        "texture": cfg.lr_texture})
    trace: list[dict] = []
    checkpoints = [_snapshot(0, params)]
    aborted = False
    steps_run = 0

    for step in range(cfg.steps):
        mesh = compose_body(model, body, preset)
        cfg.anchors = scene_anchors_for(model, mesh)
        close_up = _draw_close_up(rng, cfg)
        camera = sample_camera(rng, cfg, close_up)
        light = _light_for(rng, cfg, camera)
        az, el = camera_azimuth_elevation(camera)

        out = rasterize(mesh, faces, albedo, mesh, light, camera, cfg.background)
        condition = None
        if oracle.needs_condition:
            condition = render_pose_map(regress_joints(model, mesh), model.parents, camera)

        g_rgb = _guidance(rng, oracle, cfg, out.rgb, condition, az, el, w.rgb,
                          kind="rgb", layer="body")
        g_nrm = _guidance(rng, oracle, cfg, out.normal_map, condition, az, el, w.normal,
                          kind="normal", layer="body")
        grads = backward_render(out, g_rgb, g_nrm)

        l_s, g_s = laplacian_loss(mesh, adjacency)
        l_o, g_o = offset_loss(body.offsets)
        d_mesh = grads["d_vertices"] + w.laplacian * g_s
        d_offsets = d_mesh + w.offset * g_o
        d_beta = (np.einsum("kvc,vc->k", model.shape_basis, d_mesh)
                  if model.num_shape_params else np.zeros(0))

        probe_idx = rng.choice(model.vertex_count,
                               size=min(cfg.albedo_probe_count, model.vertex_count),
                               replace=False)
        l_a, g_a = albedo_smoothness_loss(albedo, mesh[probe_idx], cfg.albedo_sigma, rng)
        d_texture = grads["d_albedo_params"] + w.albedo_smooth * g_a

        if not _finite(d_beta, d_offsets, d_texture):
            _restore(params, checkpoints[-1])
            aborted = True
            break

        updates = {"beta": d_beta, "offsets": d_offsets, "texture": d_texture}
        if step < cfg.geometry_warmup_steps:
            updates = {"texture": d_texture}
        opt.step(updates)
        steps_run = step + 1
        trace.append({
            "step": step,
            "sds_rgb": float(np.abs(g_rgb).mean()),
            "sds_normal": float(np.abs(g_nrm).mean()),
            "loss_smooth": l_s,
            "loss_offset": l_o,
            "loss_albedo": l_a,
        })
        if (step + 1) % cfg.checkpoint_every == 0:
            checkpoints.append(_snapshot(step + 1, params))

    return StageResult(trace=trace, checkpoints=checkpoints, aborted=aborted,
                       steps_run=steps_run)


def run_stage2(model: BodyModel, body: BodyLayer, body_albedo: AlbedoField,
               garment: GarmentLayer, clothes_albedo: AlbedoField,
               oracle: GuidanceOracle, cfg: StageConfig) -> StageResult:
    """Train one garment layer {masked offsets, clothes albedo} on a frozen body.

    Guidance comes from four images per step: the clothes render, its normal
    map, and the blended clothed-human RGB/normal images (clothes pixels from
    the clothes render, the rest from the body render, selected by the
    front-most-face layer mask). After every update the offsets are projected
    back onto the garment mask. Body parameters are not registered with the
    optimizer and cannot change.
    """
    cfg = replace(cfg, anchors=SceneAnchors())
    rng = np.random.default_rng(cfg.rng_seed)
    faces = model.faces
    adjacency = build_adjacency(faces, model.vertex_count)
    preset = resolve_pose_preset(cfg.pose_preset, model.joint_count)
    w = cfg.loss_weights

    body_mesh = compose_body(model, body, preset)  # frozen for the whole stage
    cfg.anchors = scene_anchors_for(model, body_mesh)
    keep = np.where(garment.mask == 1)[0]
    if keep.size == 0:
        raise ValueError("garment mask is empty")
    remap = -np.ones(model.vertex_count, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    face_is_clothes = garment_faces(garment, faces)
    sub_faces = remap[faces[face_is_clothes]]
    mask_col = garment.mask[:, None].astype(np.float64)
    flat_grey = np.full((model.vertex_count, 3), 0.5)

    params = {"offsets": garment.offsets, "texture": clothes_albedo.params}
    opt = Adam(params, {"offsets": cfg.lr_offsets, "texture": cfg.lr_texture})
    trace: list[dict] = []
    checkpoints = [_snapshot(0, params)]
    aborted = False
    steps_run = 0

    for step in range(cfg.steps):
        clothed = compose_clothed(body_mesh, garment)
        sub_verts = clothed[keep]
        close_up = _draw_close_up(rng, cfg)
        camera = sample_camera(rng, cfg, close_up)
        light = _light_for(rng, cfg, camera)
        az, el = camera_azimuth_elevation(camera)

        out_c = rasterize(sub_verts, sub_faces, clothes_albedo, sub_verts, light,
                          camera, cfg.background)
        out_h = rasterize(body_mesh, faces, body_albedo, body_mesh, light,
                          camera, cfg.background)
        out_comp = rasterize(clothed, faces, flat_grey, None, light, camera, cfg.background)
        mask2d = layer_pixel_mask(out_comp, face_is_clothes)
        rgb_ch = blend_images(out_c.rgb, out_h.rgb, mask2d)
        nrm_ch = blend_images(out_c.normal_map, out_h.normal_map, mask2d)

        condition = None
        if oracle.needs_condition:
            condition = render_pose_map(regress_joints(model, body_mesh),
                                        model.parents, camera)

        g_ic = _guidance(rng, oracle, cfg, out_c.rgb, condition, az, el,
                         w.rgb * w.clothes_render, kind="rgb", layer="clothes")
        g_nc = _guidance(rng, oracle, cfg, out_c.normal_map, condition, az, el,
                         w.normal * w.clothes_render, kind="normal", layer="clothes")
        g_ich = _guidance(rng, oracle, cfg, rgb_ch, condition, az, el,
                          w.rgb * w.clothed_render, kind="rgb", layer="clothed")
        g_nch = _guidance(rng, oracle, cfg, nrm_ch, condition, az, el,
                          w.normal * w.clothed_render, kind="normal", layer="clothed")

        m3 = mask2d[..., None]
        grads = backward_render(out_c, g_ic + g_ich * m3, g_nc + g_nch * m3)

        l_s, g_s = laplacian_loss(clothed, adjacency)
        l_o, g_o = offset_loss(garment.offsets)
        d_offsets = np.zeros_like(garment.offsets)
        d_offsets[keep] = grads["d_vertices"]
        d_offsets += (w.laplacian * g_s) * mask_col
        d_offsets += w.offset * g_o

        probe_idx = rng.choice(keep.size, size=min(cfg.albedo_probe_count, keep.size),
                               replace=False)
        l_a, g_a = albedo_smoothness_loss(clothes_albedo, sub_verts[probe_idx],
                                          cfg.albedo_sigma, rng)
        d_texture = grads["d_albedo_params"] + w.albedo_smooth * g_a

        if not _finite(d_offsets, d_texture):
            _restore(params, checkpoints[-1])
            garment.project()
            aborted = True
            break

        updates = {"offsets": d_offsets, "texture": d_texture}
        if step < cfg.geometry_warmup_steps:
            updates = {"texture": d_texture}
        opt.step(updates)
        garment.project()
        steps_run = step + 1
        trace.append({
            "step": step,
            "sds_rgb_clothes": float(np.abs(g_ic).mean()),
            "sds_normal_clothes": float(np.abs(g_nc).mean()),
            "sds_rgb_clothed": float(np.abs(g_ich).mean()),
            "sds_normal_clothed": float(np.abs(g_nch).mean()),
            "loss_smooth": l_s,
            "loss_offset": l_o,
            "loss_albedo": l_a,
        })
        if (step + 1) % cfg.checkpoint_every == 0:
            checkpoints.append(_snapshot(step + 1, params))

    return StageResult(trace=trace, checkpoints=checkpoints, aborted=aborted,
                       steps_run=steps_run)


def render_target_views(mesh, faces, albedo, canonical, light: ShadingConfig,
                        center, azimuths, elevation: float = 0.0, distance: float = 2.0,
                        fov: float = 47.5, size: int = 64,
                        background=(1.0, 1.0, 1.0)) -> dict[tuple[int, int], RenderOutput]:
    """Render a ring of views keyed by their target-oracle bucket."""
    from .camera import orbit_camera
    views = {}
    for az in azimuths:
        cam = orbit_camera(center, az, elevation, distance, fov, size, size)
        out = rasterize(mesh, faces, albedo, canonical, light, cam, background)
        views[target_key(az, elevation)] = out
    return views
