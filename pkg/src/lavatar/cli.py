"""Command-line entry points.

Subcommands: gen-body, gen-clothes, render, animate, compose, export, serve,
check-gradients. Every run writes a JSON manifest next to its outputs.
Exit codes: 0 success, 2 validation/config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .appearance import AlbedoField, ShadingConfig
from .assets import (AssetError, AvatarAsset, GarmentAsset, animate, load_asset,
                     load_pose_sequence, model_hash, save_asset)
from .bodymodel import (BodyModelError, generate_test_body, load_body_model,
                        regress_joints, save_body_model, blend_shapes)
from .camera import orbit_camera
from .config import (StageConfig, config_snapshot, default_stage2_config,
                     default_stage1_config, load_stage_config, resolve_pose_preset,
                     stage_config_from_dict)
from .container import ContainerError
from .distillation import EchoOracle, make_target_image_oracle, run_stage1, run_stage2
from .export import export_glb, export_obj, skin_from_model
from .images import read_png, write_png, write_raw_f32
from .layering import (BodyLayer, GarmentType, LayeringError, a_pose_params,
                       compose_body, compose_layers, extract_clothes, new_garment)
from .renderer import rasterize


class ValidationError(ValueError):
    pass


def _load_model(args):
    if getattr(args, "model", None):
        return load_body_model(Path(args.model).read_bytes())
    spec = getattr(args, "test_body", None) or "7,0"
    m = re.fullmatch(r"(\d+),([012])", spec)
    if not m:
        raise ValidationError(f"--test-body must be 'seed,detail', got {spec!r}")
    return generate_test_body(int(m.group(1)), int(m.group(2)))


def _load_targets(target_dir: str, size: int) -> dict:
    targets = {}
    pattern = re.compile(r"az(-?\d+)_el(-?\d+)\.png")
    for path in sorted(Path(target_dir).glob("*.png")):
        m = pattern.fullmatch(path.name)
        if not m:
            continue
        img = read_png(path)
        if img.shape[0] != size or img.shape[1] != size:
            raise ValidationError(
                f"target {path.name} is {img.shape[1]}x{img.shape[0]}, run uses {size}x{size}")
        targets[(int(m.group(1)), int(m.group(2)))] = img
    if not targets:
        raise ValidationError(f"no az*_el*.png targets found in {target_dir}")
    return targets


def _make_oracle(args, size: int):
    if args.oracle == "echo":
        return EchoOracle()
    if args.oracle == "target":
        if not args.target_dir:
            raise ValidationError("--oracle target requires --target-dir")
        return make_target_image_oracle(_load_targets(args.target_dir, size), eta=args.eta)
    if args.oracle == "remote":
        if not args.endpoint:
            raise ValidationError("--oracle remote requires --endpoint")
        from .remote import make_remote_oracle
        prompts = json.loads(Path(args.prompts).read_text()) if args.prompts else {}
        return make_remote_oracle(args.endpoint, prompts, args.guidance_scale,
                                  args.negative_prompt)
    raise ValidationError(f"unknown oracle {args.oracle!r}")


def _stage_config(args, base: StageConfig) -> StageConfig:
    cfg = load_stage_config(args.config, base) if args.config else base
    overrides = {}
    for key in ("steps", "rng_seed", "image_size"):
        flag = {"steps": "steps", "rng_seed": "seed", "image_size": "size"}[key]
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = stage_config_from_dict(overrides, cfg)
    return cfg


def _write_manifest(out_path: Path, command: str, argv, outputs, started: float,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "outputs": [str(o) for o in outputs],
        "elapsedSec": round(time.time() - started, 3),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _trace_summary(trace: list[dict]) -> dict:
    if not trace:
        return {}
    keys = [k for k in trace[0] if k != "step"]
    return {k: {"first": trace[0][k], "last": trace[-1][k]} for k in keys}


def _maybe_save_model(args, model, out: Path, outputs: list) -> None:
    model_out = out.parent / "model.sosm"
    if getattr(args, "model", None) is None and not model_out.exists():
        model_out.write_bytes(save_body_model(model))
        outputs.append(model_out)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_gen_body(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    cfg = _stage_config(args, default_stage1_config())
    oracle = _make_oracle(args, cfg.image_size)
    body = BodyLayer(beta=np.zeros(model.num_shape_params),
                     offsets=np.zeros((model.vertex_count, 3)))
    albedo = AlbedoField.for_points(model.template, seed=cfg.rng_seed)
    result = run_stage1(model, body, albedo, oracle, cfg)
    asset = AvatarAsset(model_ref=model_hash(model), body=body, albedo=albedo,
                        provenance={"config": config_snapshot(cfg),
                                    "stepsRun": result.steps_run,
                                    "aborted": result.aborted,
                                    "trace": _trace_summary(result.trace)})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_asset(asset))
    outputs = [out]
    _maybe_save_model(args, model, out, outputs)
    trace_path = out.with_suffix(".trace.json")
    trace_path.write_text(json.dumps(result.trace))
    outputs.append(trace_path)
    _write_manifest(out, "gen-body", argv, outputs, started,
                    {"aborted": result.aborted, "stepsRun": result.steps_run})
    if result.aborted:
        print("warning: run aborted on non-finite loss; last checkpoint kept",
              file=sys.stderr)
    print(f"wrote {out}")
    return 0


def cmd_gen_clothes(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    avatar = load_asset(Path(args.avatar).read_bytes(), model)
    if not isinstance(avatar, AvatarAsset):
        raise ValidationError(f"{args.avatar} is not an avatar asset")
    gtype = GarmentType(args.garment_type)
    cfg = _stage_config(args, default_stage2_config(gtype))
    oracle = _make_oracle(args, cfg.image_size)
    garment = new_garment(model, gtype, layer_order=args.layer_order)
    clothes_albedo = AlbedoField.for_points(model.template, seed=cfg.rng_seed + 1)
    result = run_stage2(model, avatar.body, avatar.albedo, garment, clothes_albedo,
                        oracle, cfg)
    asset = GarmentAsset(model_ref=model_hash(model), garment=garment,
                         albedo=clothes_albedo,
                         provenance={"config": config_snapshot(cfg),
                                     "stepsRun": result.steps_run,
                                     "aborted": result.aborted,
                                     "trace": _trace_summary(result.trace)})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_asset(asset))
    outputs = [out]
    _maybe_save_model(args, model, out, outputs)
    _write_manifest(out, "gen-clothes", argv, outputs, started,
                    {"aborted": result.aborted, "stepsRun": result.steps_run})
    print(f"wrote {out}")
    return 0


def _compose_assets(model, avatar: AvatarAsset, garments: list[GarmentAsset],
                    beta_delta: np.ndarray | None = None):
    beta = avatar.body.beta.copy()
    if beta_delta is not None:
        if beta_delta.shape[0] > beta.shape[0]:
            raise ValidationError(
                f"--beta-delta has {beta_delta.shape[0]} entries, model has {beta.shape[0]}")
        beta[:beta_delta.shape[0]] += beta_delta
    body = BodyLayer(beta=beta, offsets=avatar.body.offsets)
    layers = sorted((g.garment for g in garments), key=lambda g: g.layer_order)
    body_mesh = compose_body(model, body)
    meshes = compose_layers(body_mesh, list(layers))
    colors = avatar.albedo.evaluate(body_mesh)
    for g, mesh_after in zip(garments, meshes[1:]):
        sel = g.garment.mask == 1
        colors[sel] = g.albedo.evaluate(mesh_after[sel])
    return body, meshes, colors


def _load_garments(args, model) -> list[GarmentAsset]:
    garments = []
    for path in getattr(args, "garment", None) or []:
        g = load_asset(Path(path).read_bytes(), model)
        if not isinstance(g, GarmentAsset):
            raise ValidationError(f"{path} is not a garment asset")
        garments.append(g)
    return garments


def cmd_compose(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    avatar = load_asset(Path(args.avatar).read_bytes(), model)
    garments = _load_garments(args, model)
    delta = (np.asarray([float(x) for x in args.beta_delta.split(",")])
             if args.beta_delta else None)
    body, meshes, colors = _compose_assets(model, avatar, garments, delta)
    shaped = blend_shapes(model, a_pose_params(model, body.beta, None))
    skin = skin_from_model(model, regress_joints(model, shaped))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(export_glb(meshes[-1], model.faces, colors, skin))
    _write_manifest(out, "compose", argv, [out], started,
                    {"layerCount": len(garments)})
    print(f"wrote {out}")
    return 0


def cmd_render(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    avatar = load_asset(Path(args.avatar).read_bytes(), model)
    garments = _load_garments(args, model)
    _, meshes, colors = _compose_assets(model, avatar, garments)
    mesh = meshes[-1]
    center = 0.5 * (mesh.min(axis=0) + mesh.max(axis=0))
    cam = orbit_camera(center, args.azimuth, args.elevation, args.distance,
                       width=args.size, height=args.size)
    light = ShadingConfig(light_position=cam.position + np.array([0.5, 1.0, 0.5]),
                          diffuse=np.full(3, 0.45), ambient=np.full(3, 0.7))
    out_img = rasterize(mesh, model.faces, colors, None, light, cam,
                        background=(1.0, 1.0, 1.0))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_png(out, out_img.rgb)
    outputs = [out]
    if args.raw:
        raw_path = Path(args.raw)
        write_raw_f32(raw_path, out_img.rgb)
        outputs.append(raw_path)
    _write_manifest(out, "render", argv, outputs, started)
    print(f"wrote {out}")
    return 0


def cmd_animate(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    avatar = load_asset(Path(args.avatar).read_bytes(), model)
    garments = _load_garments(args, model)
    seq = load_pose_sequence(args.pose_seq)
    frames = animate(model, avatar, garments, seq)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _, meshes, colors = _compose_assets(model, avatar, garments)
    shaped = blend_shapes(model, a_pose_params(model, avatar.body.beta, None))
    skin = skin_from_model(model, regress_joints(model, shaped))
    outputs = []
    for i, frame in enumerate(frames):
        path = outdir / f"frame_{i:04d}.glb"
        path.write_bytes(export_glb(frame, model.faces, colors, skin))
        outputs.append(path)
        if args.render_size:
            center = 0.5 * (frame.min(axis=0) + frame.max(axis=0))
            cam = orbit_camera(center, 0.0, 10.0, 2.0,
                               width=args.render_size, height=args.render_size)
            light = ShadingConfig(light_position=cam.position, diffuse=np.full(3, 0.45),
                                  ambient=np.full(3, 0.7))
            img = rasterize(frame, model.faces, colors, None, light, cam)
            png = outdir / f"frame_{i:04d}.png"
            write_png(png, img.rgb)
            outputs.append(png)
    _write_manifest(outdir / "animate", "animate", argv, outputs, started,
                    {"frames": len(frames), "fps": seq.fps})
    print(f"wrote {len(frames)} frames to {outdir}")
    return 0


def cmd_export(args, argv) -> int:
    started = time.time()
    model = _load_model(args)
    asset = load_asset(Path(args.asset).read_bytes(), model)
    if isinstance(asset, AvatarAsset):
        mesh = compose_body(model, asset.body)
        colors = asset.albedo.evaluate(mesh)
        faces = model.faces
        shaped = blend_shapes(model, a_pose_params(model, asset.body.beta, None))
        skin = skin_from_model(model, regress_joints(model, shaped))
    else:
        base_body = BodyLayer(beta=np.zeros(model.num_shape_params),
                              offsets=np.zeros((model.vertex_count, 3)))
        if args.avatar:
            avatar = load_asset(Path(args.avatar).read_bytes(), model)
            base_body = avatar.body
        composed = compose_layers(compose_body(model, base_body), [asset.garment])[-1]
        sub = extract_clothes(composed, asset.garment, model.faces, model)
        mesh, faces = sub.vertices, sub.faces
        colors = asset.albedo.evaluate(mesh)
        skin = None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "obj":
        out.write_bytes(export_obj(mesh, faces, colors))
    elif args.format == "glb":
        out.write_bytes(export_glb(mesh, faces, colors, skin))
    else:
        raise ValidationError(f"unsupported format {args.format!r}")
    _write_manifest(out, "export", argv, [out], started)
    print(f"wrote {out}")
    return 0


def cmd_serve(args, argv) -> int:
    from .service import run_server
    port = args.port or int(os.environ.get("LAVATAR_PORT", "8321"))
    run_server(args.assets, host=args.host, port=port)
    return 0


def cmd_check_gradients(args, argv) -> int:
    from .gradcheck import run_gradient_suite, suite_summary
    results = run_gradient_suite(seed=args.seed)
    for r in results:
        print(f"{r.name:26s} probes={len(r.rel_errors):4d} skipped={r.skipped} "
              f"max_rel_err={r.max_rel_error:.3e}")
    summary = suite_summary(results)
    print(f"max rel error: {summary['max_rel_error']:.6e} "
          f"({summary['within_tol']}/{summary['probes']} probes within 1e-3)")
    return 0 if summary["max_rel_error"] <= 1e-3 else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_model_args(p):
    p.add_argument("--model", help="body model container (.sosm)")
    p.add_argument("--test-body", help="procedural body 'seed,detail' (default 7,0)")


def _add_oracle_args(p):
    p.add_argument("--oracle", choices=["echo", "target", "remote"], default="echo")
    p.add_argument("--target-dir", help="directory of azA_elB.png target views")
    p.add_argument("--eta", type=float, default=1.0, help="target-oracle gradient scale")
    p.add_argument("--endpoint", help="remote guidance endpoint URL")
    p.add_argument("--prompts", help="JSON file: prompt id -> text")
    p.add_argument("--guidance-scale", type=float, default=7.5)
    p.add_argument("--negative-prompt", default=None)


def _add_stage_args(p):
    p.add_argument("--config", help="stage config file (.toml or .json)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="rng seed override")
    p.add_argument("--size", type=int, default=None, help="render size override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lavatar",
                                     description="layered avatar engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-body", help="distill an unclothed body avatar")
    _add_model_args(p)
    _add_oracle_args(p)
    _add_stage_args(p)
    p.add_argument("--out", required=True, help="output avatar asset (.sosm)")
    p.set_defaults(func=cmd_gen_body)

    p = sub.add_parser("gen-clothes", help="distill a garment layer on a frozen avatar")
    _add_model_args(p)
    _add_oracle_args(p)
    _add_stage_args(p)
    p.add_argument("--avatar", required=True)
    p.add_argument("--garment-type", required=True,
                   choices=[g.value for g in GarmentType])
    p.add_argument("--layer-order", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_clothes)

    p = sub.add_parser("render", help="render a composed avatar to PNG")
    _add_model_args(p)
    p.add_argument("--avatar", required=True)
    p.add_argument("--garment", action="append")
    p.add_argument("--azimuth", type=float, default=0.0)
    p.add_argument("--elevation", type=float, default=10.0)
    p.add_argument("--distance", type=float, default=2.0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", help="also dump raw f32 RGB to this path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="pose a composed avatar over a sequence")
    _add_model_args(p)
    p.add_argument("--avatar", required=True)
    p.add_argument("--garment", action="append")
    p.add_argument("--pose-seq", required=True, help="pose sequence JSON")
    p.add_argument("--outdir", required=True)
    p.add_argument("--render-size", type=int, default=0)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("compose", help="compose avatar + garments into glTF")
    _add_model_args(p)
    p.add_argument("--avatar", required=True)
    p.add_argument("--garment", action="append")
    p.add_argument("--beta-delta", help="comma-separated shape delta")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("export", help="export an asset to OBJ/GLB")
    _add_model_args(p)
    p.add_argument("--asset", required=True)
    p.add_argument("--avatar", help="body to compose a garment asset on")
    p.add_argument("--format", choices=["obj", "glb"], default="glb")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the try-on compose service")
    p.add_argument("--assets", required=True, help="asset directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="port (default: LAVATAR_PORT env or 8321)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("check-gradients", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_check_gradients)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (ValidationError, BodyModelError, LayeringError, ContainerError,
            AssetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
