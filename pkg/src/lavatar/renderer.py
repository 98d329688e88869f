"""Differentiable software rasterizer.

Forward: perspective projection, z-buffered triangle fill with a top-left
tie rule, perspective-correct barycentric interpolation of positions,
normals and canonical (albedo-query) positions, double-sided Phong shading.

Backward: fixed-visibility vector-Jacobian products. The per-pixel triangle
assignment and barycentric weights recorded during the forward pass are
treated as constants; gradients flow through interpolation, the normal
pipeline (area-weighted face normals -> vertex normals -> per-pixel
renormalization), shading and the albedo field, down to vertex positions,
albedo parameters and light parameters. Silhouette (coverage) changes carry
no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .appearance import AlbedoField, ShadingConfig, shade_vjp
from .camera import Camera


def compute_vertex_normals(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, renormalized."""
    fn = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                  verts[faces[:, 2]] - verts[faces[:, 0]])
    acc = np.zeros_like(verts)
    np.add.at(acc, faces[:, 0], fn)
    np.add.at(acc, faces[:, 1], fn)
    np.add.at(acc, faces[:, 2], fn)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    return acc / np.maximum(norm, 1e-20)


def encode_normal(n: np.ndarray) -> np.ndarray:
    return (n + 1.0) * 0.5


def decode_normal(img: np.ndarray) -> np.ndarray:
    return img * 2.0 - 1.0


@dataclass
class _RenderContext:
    verts: np.ndarray
    faces: np.ndarray
    canonical: np.ndarray
    albedo: object            # AlbedoField or (V,3) vertex colors
    shading: ShadingConfig
    camera: Camera
    vertex_normals: np.ndarray


@dataclass
class RenderOutput:
    rgb: np.ndarray          # (H, W, 3) in [0, 1]
    normal_map: np.ndarray   # (H, W, 3), (n+1)/2 of world normals
    coverage: np.ndarray     # (H, W) 0/1
    depth: np.ndarray        # (H, W), inf on background
    frag_face: np.ndarray    # (H, W) int32, -1 on background
    frag_bary: np.ndarray    # (H, W, 3) perspective-correct barycentrics
    ctx: _RenderContext | None = None


def _edge_is_top_left(ex: float, ey: float) -> bool:
    # y grows downward; left edges run upward, top edges run right
    return ey < 0.0 or (ey == 0.0 and ex > 0.0)


def rasterize(verts: np.ndarray, faces: np.ndarray, albedo,
              canonical: np.ndarray | None, shading: ShadingConfig,
              camera: Camera, background=(1.0, 1.0, 1.0)) -> RenderOutput:
    """Render a triangle mesh to RGB + normal map + coverage + depth.

    `albedo` is an AlbedoField (queried at interpolated `canonical`
    positions) or a (V,3) array of vertex colors. Faces with any vertex at
    or behind the near plane are skipped rather than clipped.
    """
    H, W = camera.height, camera.width
    background = np.asarray(background, dtype=np.float64)
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if canonical is None:
        canonical = verts
    canonical = np.asarray(canonical, dtype=np.float64)

    rgb = np.tile(background, (H, W, 1))
    normal_map = np.full((H, W, 3), 0.5)
    depth_buf = np.full((H, W), np.inf)
    frag_face = np.full((H, W), -1, dtype=np.int32)
    frag_bary = np.zeros((H, W, 3))

    if len(verts) == 0 or len(faces) == 0:
        return RenderOutput(rgb, normal_map, np.zeros((H, W), dtype=np.int64),
                            depth_buf, frag_face, frag_bary, None)

    vn = compute_vertex_normals(verts, faces)
    screen, depth = camera.project(verts)

    for fi in range(len(faces)):
        ia, ib, ic = faces[fi]
        d = depth[[ia, ib, ic]]
        if (d <= camera.near).any() or (d > camera.far).all():
            continue
        p0, p1, p2 = screen[ia], screen[ib], screen[ic]
        area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if area2 == 0.0:
            continue
        s = 1.0 if area2 > 0 else -1.0

        xs = np.array([p0[0], p1[0], p2[0]])
        ys = np.array([p0[1], p1[1], p2[1]])
        j_lo = max(0, int(np.ceil(xs.min() - 0.5)))
        j_hi = min(W - 1, int(np.floor(xs.max() - 0.5)))
        i_lo = max(0, int(np.ceil(ys.min() - 0.5)))
        i_hi = min(H - 1, int(np.floor(ys.max() - 0.5)))
        if j_lo > j_hi or i_lo > i_hi:
            continue
        jj, ii = np.meshgrid(np.arange(j_lo, j_hi + 1), np.arange(i_lo, i_hi + 1))
        px = jj + 0.5
        py = ii + 0.5

        # edge k is opposite vertex k
        tri = (p0, p1, p2)
        F = []
        inside = np.ones(px.shape, dtype=bool)
        for k in range(3):
            a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
            Fk = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
            Fs = s * Fk
            accept_tie = _edge_is_top_left(s * (b[0] - a[0]), s * (b[1] - a[1]))
            inside &= (Fs > 0) | ((Fs == 0) & accept_tie)
            F.append(Fk)
        if not inside.any():
            continue

        b0 = F[0][inside] / area2
        b1 = F[1][inside] / area2
        b2 = F[2][inside] / area2
        inv_d = b0 / d[0] + b1 / d[1] + b2 / d[2]
        pix_depth = 1.0 / inv_d
        rows, cols = ii[inside], jj[inside]
        closer = pix_depth < depth_buf[rows, cols]
        if not closer.any():
            continue
        rows, cols, pix_depth = rows[closer], cols[closer], pix_depth[closer]
        pc = np.stack([b0[closer] / d[0], b1[closer] / d[1], b2[closer] / d[2]], axis=1)
        pc /= pc.sum(axis=1, keepdims=True)
        depth_buf[rows, cols] = pix_depth
        frag_face[rows, cols] = fi
        frag_bary[rows, cols] = pc

    covered = frag_face >= 0
    ctx = _RenderContext(verts=verts, faces=faces, canonical=canonical, albedo=albedo,
                         shading=shading, camera=camera, vertex_normals=vn)
    if covered.any():
        rr, cc = np.where(covered)
        color, normal, _ = _shade_pixels(ctx, frag_face[rr, cc], frag_bary[rr, cc])
        rgb[rr, cc] = np.clip(color, 0.0, 1.0)
        normal_map[rr, cc] = encode_normal(normal)
    return RenderOutput(rgb=rgb, normal_map=normal_map,
                        coverage=covered.astype(np.int64), depth=depth_buf,
                        frag_face=frag_face, frag_bary=frag_bary, ctx=ctx)


def _shade_pixels(ctx: _RenderContext, face_ids: np.ndarray, bary: np.ndarray):
    """Forward shading for a batch of fragments; returns (raw color, normal, cache)."""
    idx = ctx.faces[face_ids]                      # (K, 3)
    v = ctx.verts[idx]                             # (K, 3, 3)
    p = np.einsum("ki,kic->kc", bary, v)
    n_raw = np.einsum("ki,kic->kc", bary, ctx.vertex_normals[idx])
    n_len = np.maximum(np.linalg.norm(n_raw, axis=1, keepdims=True), 1e-20)
    n_hat = n_raw / n_len
    to_cam = ctx.camera.position - p
    flip = np.where(np.sum(n_hat * to_cam, axis=1) >= 0.0, 1.0, -1.0)[:, None]
    normal = flip * n_hat

    xc = np.einsum("ki,kic->kc", bary, ctx.canonical[idx])
    if isinstance(ctx.albedo, AlbedoField):
        rho, field_cache = ctx.albedo.evaluate_with_cache(xc)
    else:
        rho = np.einsum("ki,kic->kc", bary, np.asarray(ctx.albedo, dtype=np.float64)[idx])
        field_cache = None

    cfg = ctx.shading
    to_light = cfg.light_position - p
    dist = np.linalg.norm(to_light, axis=1, keepdims=True)
    if (dist == 0).any():
        raise ValueError("surface point coincides with the light position")
    n_l = to_light / dist
    lam = np.maximum(0.0, np.sum(n_l * normal, axis=1))[:, None]
    color = rho * (cfg.ambient + lam * cfg.diffuse)
    cache = dict(idx=idx, p=p, n_raw=n_raw, n_len=n_len, n_hat=n_hat, flip=flip,
                 normal=normal, rho=rho, field_cache=field_cache, color=color)
    return color, normal, cache


def backward_render(out: RenderOutput, d_rgb: np.ndarray, d_normal: np.ndarray) -> dict:
    """Fixed-visibility VJP of rasterize.

    Returns gradients for vertex positions, albedo parameters (or vertex
    colors) and the light parameters. Per-pixel face assignment and
    barycentrics are constants; the [0,1] image clamp gates RGB gradients.
    """
    if out.ctx is None:
        raise ValueError("render output carries no fragment records")
    ctx = out.ctx
    grads = {
        "d_vertices": np.zeros_like(ctx.verts),
        "d_light_position": np.zeros(3),
        "d_diffuse": np.zeros(3),
        "d_ambient": np.zeros(3),
    }
    if isinstance(ctx.albedo, AlbedoField):
        grads["d_albedo_params"] = np.zeros_like(ctx.albedo.params)
    else:
        grads["d_vertex_colors"] = np.zeros_like(np.asarray(ctx.albedo, dtype=np.float64))

    rr, cc = np.where(out.frag_face >= 0)
    if rr.size == 0:
        return grads
    face_ids = out.frag_face[rr, cc]
    bary = out.frag_bary[rr, cc]
    color, normal, cache = _shade_pixels(ctx, face_ids, bary)
    idx = cache["idx"]

    # image clamp gate, then shading VJP
    g_rgb = np.asarray(d_rgb, dtype=np.float64)[rr, cc] * (color <= 1.0)
    d_rho, d_n, d_p, d_lpos, d_diff, d_amb = shade_vjp(
        cache["rho"], normal, cache["p"], ctx.shading, g_rgb)
    grads["d_light_position"] += d_lpos
    grads["d_diffuse"] += d_diff
    grads["d_ambient"] += d_amb

    # normal-map branch: encode(n) = (n+1)/2
    d_n = d_n + 0.5 * np.asarray(d_normal, dtype=np.float64)[rr, cc]

    # unflip, then pull back through per-pixel renormalization
    d_n_hat = cache["flip"] * d_n
    n_hat = cache["n_hat"]
    d_n_raw = (d_n_hat - n_hat * np.sum(d_n_hat * n_hat, axis=1, keepdims=True)) / cache["n_len"]

    d_vn = np.zeros_like(ctx.verts)
    for corner in range(3):
        np.add.at(d_vn, idx[:, corner], bary[:, corner:corner + 1] * d_n_raw)

    # position path (shading light direction)
    for corner in range(3):
        np.add.at(grads["d_vertices"], idx[:, corner], bary[:, corner:corner + 1] * d_p)

    # albedo path
    if isinstance(ctx.albedo, AlbedoField):
        d_params, _ = ctx.albedo.vjp(cache["field_cache"], d_rho)
        grads["d_albedo_params"] += d_params
    else:
        colors = np.asarray(ctx.albedo, dtype=np.float64)
        for corner in range(3):
            np.add.at(grads["d_vertex_colors"], idx[:, corner],
                      bary[:, corner:corner + 1] * d_rho)
        del colors

    # vertex normals -> vertex positions
    grads["d_vertices"] += _vertex_normal_vjp(ctx.verts, ctx.faces, d_vn)
    return grads


def _vertex_normal_vjp(verts: np.ndarray, faces: np.ndarray, d_vn: np.ndarray) -> np.ndarray:
    """Pull back gradients on unit vertex normals to vertex positions."""
    fn = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]],
                  verts[faces[:, 2]] - verts[faces[:, 0]])
    acc = np.zeros_like(verts)
    np.add.at(acc, faces[:, 0], fn)
    np.add.at(acc, faces[:, 1], fn)
    np.add.at(acc, faces[:, 2], fn)
    norm = np.maximum(np.linalg.norm(acc, axis=1, keepdims=True), 1e-20)
    vn = acc / norm
    d_acc = (d_vn - vn * np.sum(d_vn * vn, axis=1, keepdims=True)) / norm

    g_face = d_acc[faces[:, 0]] + d_acc[faces[:, 1]] + d_acc[faces[:, 2]]
    e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
    e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
    d_e1 = np.cross(e2, g_face)
    d_e2 = np.cross(g_face, e1)
    d_verts = np.zeros_like(verts)
    np.add.at(d_verts, faces[:, 0], -(d_e1 + d_e2))
    np.add.at(d_verts, faces[:, 1], d_e1)
    np.add.at(d_verts, faces[:, 2], d_e2)
    return d_verts


# ---------------------------------------------------------------------------
# Pose-condition map
# ---------------------------------------------------------------------------

# 18-entry limb/joint palette (values in [0,1])
POSE_PALETTE = np.array([
    [255, 0, 0], [255, 85, 0], [255, 170, 0], [255, 255, 0], [170, 255, 0],
    [85, 255, 0], [0, 255, 0], [0, 255, 85], [0, 255, 170], [0, 255, 255],
    [0, 170, 255], [0, 85, 255], [0, 0, 255], [85, 0, 255], [170, 0, 255],
    [255, 0, 255], [255, 0, 170], [255, 0, 85],
], dtype=np.float64) / 255.0

JOINT_DISK_RADIUS = 4.0
LIMB_HALF_WIDTH = 2.0


def render_pose_map(joints3d: np.ndarray, parents: np.ndarray, camera: Camera) -> np.ndarray:
    """Skeleton condition image: colored limb segments and joint disks on black."""
    joints3d = np.asarray(joints3d, dtype=np.float64)
    if joints3d.shape[0] < 2:
        raise ValueError("pose map needs at least two joints")
    img = np.zeros((camera.height, camera.width, 3))
    screen, depth = camera.project(joints3d)
    visible = depth > camera.near
    if not visible.any():
        return img
    yy, xx = np.mgrid[0:camera.height, 0:camera.width]
    pix = np.stack([xx + 0.5, yy + 0.5], axis=-1)

    for j in range(len(parents)):
        p = int(parents[j])
        if p < 0 or not (visible[j] and visible[p]):
            continue
        a, b = screen[p], screen[j]
        ab = b - a
        denom = max(float(ab @ ab), 1e-12)
        t = np.clip(((pix - a) @ ab) / denom, 0.0, 1.0)
        dist = np.linalg.norm(pix - (a + t[..., None] * ab), axis=-1)
        img[dist <= LIMB_HALF_WIDTH] = POSE_PALETTE[j % len(POSE_PALETTE)]

    for j in range(len(joints3d)):
        if not visible[j]:
            continue
        dist = np.linalg.norm(pix - screen[j], axis=-1)
        img[dist <= JOINT_DISK_RADIUS] = POSE_PALETTE[j % len(POSE_PALETTE)]
    return img


# ---------------------------------------------------------------------------
# Blending
# ---------------------------------------------------------------------------

def blend_images(image_c, image_h, mask: np.ndarray) -> np.ndarray:
    """Per-pixel blend: clothes where mask=1, body where mask=0.

    Accepts RenderOutputs (their rgb planes) or raw (H,W,3) arrays.
    """
    a = image_c.rgb if isinstance(image_c, RenderOutput) else np.asarray(image_c, dtype=np.float64)
    b = image_h.rgb if isinstance(image_h, RenderOutput) else np.asarray(image_h, dtype=np.float64)
    mask = np.asarray(mask)
    if a.shape != b.shape or mask.shape != a.shape[:2]:
        raise ValueError(f"blend shapes differ: {a.shape} vs {b.shape} vs {mask.shape}")
    m = mask[..., None].astype(np.float64)
    return a * m + b * (1.0 - m)


def layer_pixel_mask(out: RenderOutput, face_flags: np.ndarray) -> np.ndarray:
    """Pixels whose front-most face is flagged (e.g. belongs to the clothes layer)."""
    mask = np.zeros(out.frag_face.shape, dtype=np.int64)
    covered = out.frag_face >= 0
    mask[covered] = np.asarray(face_flags, dtype=np.int64)[out.frag_face[covered]]
    return mask
