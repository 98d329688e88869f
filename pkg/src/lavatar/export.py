"""Mesh export: OBJ with per-vertex colors and binary glTF with skinning.

Positions are meters, right-handed Y-up. The GLB writer emits a fixed
layout (one mesh primitive, optional COLOR_0 and a translation-only rest
skin) so byte output is deterministic; `load_glb` reads back exactly that
layout, which makes export -> import -> export idempotent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np


class ExportError(ValueError):
    pass


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def export_obj(verts: np.ndarray, faces: np.ndarray, colors: np.ndarray | None = None) -> bytes:
    """Wavefront OBJ; vertex colors ride on the `v` lines (common extension)."""
    verts = np.asarray(verts, dtype=np.float32)
    lines = []
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float32)
        if colors.shape != verts.shape:
            raise ExportError(f"colors shape {colors.shape} != verts {verts.shape}")
        for v, c in zip(verts, colors):
            lines.append("v " + " ".join(repr(float(x)) for x in (*v, *c)))
    else:
        for v in verts:
            lines.append("v " + " ".join(repr(float(x)) for x in v))
    for f in np.asarray(faces, dtype=np.int64):
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# GLB
# ---------------------------------------------------------------------------

_F32, _U16, _U32 = 5126, 5123, 5125


@dataclass
class SkinData:
    parents: np.ndarray             # (J,)
    local_translations: np.ndarray  # (J, 3) f32, root holds its world position
    inverse_bind: np.ndarray        # (J, 4, 4) f32, column-major storage
    joints_0: np.ndarray            # (V, 4) u16
    weights_0: np.ndarray           # (V, 4) f32


def skin_from_model(model, joints_world: np.ndarray) -> SkinData:
    """Rest-pose skin: translation-only bind transforms, top-4 weights."""
    joints_world = np.asarray(joints_world, dtype=np.float64)
    J = joints_world.shape[0]
    local = joints_world.copy()
    for j in range(J):
        p = int(model.parents[j])
        if p >= 0:
            local[j] = joints_world[j] - joints_world[p]
    ibm = np.zeros((J, 4, 4), dtype=np.float32)
    for j in range(J):
        m = np.eye(4)
        m[:3, 3] = -joints_world[j]
        ibm[j] = m.T.astype(np.float32)  # column-major storage

    w = model.skin_weights
    top = np.argsort(-w, axis=1)[:, :4]
    w4 = np.take_along_axis(w, top, axis=1)
    w4 = w4 / w4.sum(axis=1, keepdims=True)
    return SkinData(parents=np.asarray(model.parents, dtype=np.int64),
                    local_translations=local.astype(np.float32),
                    inverse_bind=ibm,
                    joints_0=top.astype(np.uint16),
                    weights_0=w4.astype(np.float32))


def _pad4(data: bytes, pad: bytes) -> bytes:
    rem = len(data) % 4
    return data if rem == 0 else data + pad * (4 - rem)


def export_glb(verts: np.ndarray, faces: np.ndarray, colors: np.ndarray | None = None,
               skin: SkinData | None = None, name: str = "mesh") -> bytes:
    verts32 = np.ascontiguousarray(verts, dtype="<f4").reshape(-1, 3)
    faces32 = np.ascontiguousarray(faces, dtype="<u4").reshape(-1, 3)

    blobs: list[bytes] = []
    views: list[dict] = []
    accessors: list[dict] = []

    def add(data: bytes, target: int | None = None) -> int:
        offset = sum(len(b) for b in blobs)
        blobs.append(_pad4(data, b"\x00"))
        view = {"buffer": 0, "byteOffset": offset, "byteLength": len(data)}
        if target is not None:
            view["target"] = target
        views.append(view)
        return len(views) - 1

    def accessor(view: int, comp: int, count: int, kind: str, extra: dict | None = None) -> int:
        acc = {"bufferView": view, "componentType": comp, "count": count, "type": kind}
        if extra:
            acc.update(extra)
        accessors.append(acc)
        return len(accessors) - 1

    pos_extra = {"min": [float(x) for x in verts32.min(axis=0)],
                 "max": [float(x) for x in verts32.max(axis=0)]} if len(verts32) else {
                 "min": [0.0, 0.0, 0.0], "max": [0.0, 0.0, 0.0]}
    a_pos = accessor(add(verts32.tobytes(), 34962), _F32, len(verts32), "VEC3", pos_extra)
    attributes = {"POSITION": a_pos}
    if colors is not None:
        col32 = np.ascontiguousarray(colors, dtype="<f4").reshape(-1, 3)
        if len(col32) != len(verts32):
            raise ExportError("colors/verts length mismatch")
        attributes["COLOR_0"] = accessor(add(col32.tobytes(), 34962), _F32, len(col32), "VEC3")
    if skin is not None:
        j16 = np.ascontiguousarray(skin.joints_0, dtype="<u2")
        w32 = np.ascontiguousarray(skin.weights_0, dtype="<f4")
        attributes["JOINTS_0"] = accessor(add(j16.tobytes(), 34962), _U16, len(j16), "VEC4")
        attributes["WEIGHTS_0"] = accessor(add(w32.tobytes(), 34962), _F32, len(w32), "VEC4")
    a_idx = accessor(add(faces32.tobytes(), 34963), _U32, faces32.size, "SCALAR")

    mesh_node: dict = {"name": name, "mesh": 0}
    nodes = [mesh_node]
    scene_nodes = [0]
    gltf: dict = {
        "asset": {"version": "2.0", "generator": "lavatar"},
        "scene": 0,
        "scenes": [{"nodes": scene_nodes}],
        "nodes": nodes,
        "meshes": [{"primitives": [{"attributes": attributes, "indices": a_idx, "mode": 4}]}],
    }
    if skin is not None:
        ibm32 = np.ascontiguousarray(skin.inverse_bind, dtype="<f4")
        a_ibm = accessor(add(ibm32.tobytes()), _F32, len(ibm32), "MAT4")
        J = len(skin.parents)
        children: dict[int, list[int]] = {}
        root = 0
        for j in range(J):
            p = int(skin.parents[j])
            if p < 0:
                root = j
            else:
                children.setdefault(p, []).append(j)
        for j in range(J):
            node = {"name": f"joint_{j}",
                    "translation": [float(x) for x in skin.local_translations[j]]}
            if j in children:
                node["children"] = [1 + c for c in children[j]]
            nodes.append(node)
        mesh_node["skin"] = 0
        scene_nodes.append(1 + root)
        gltf["skins"] = [{"inverseBindMatrices": a_ibm, "skeleton": 1 + root,
                          "joints": [1 + j for j in range(J)]}]
    gltf["accessors"] = accessors
    gltf["bufferViews"] = views
    bin_chunk = b"".join(blobs)
    gltf["buffers"] = [{"byteLength": len(bin_chunk)}]

    json_chunk = _pad4(json.dumps(gltf, separators=(",", ":")).encode("utf-8"), b" ")
    total = 12 + 8 + len(json_chunk) + 8 + len(bin_chunk)
    out = [struct.pack("<III", 0x46546C67, 2, total),
           struct.pack("<II", len(json_chunk), 0x4E4F534A), json_chunk,
           struct.pack("<II", len(bin_chunk), 0x004E4942), bin_chunk]
    return b"".join(out)


def load_glb(data: bytes):
    """Read back a GLB written by export_glb (positions, faces, colors, skin, name)."""
    magic, version, _ = struct.unpack_from("<III", data, 0)
    if magic != 0x46546C67 or version != 2:
        raise ExportError("not a glTF v2 binary")
    offset = 12
    gltf, binary = None, b""
    while offset < len(data):
        length, ctype = struct.unpack_from("<II", data, offset)
        offset += 8
        chunk = data[offset:offset + length]
        offset += length
        if ctype == 0x4E4F534A:
            gltf = json.loads(chunk.decode("utf-8"))
        elif ctype == 0x004E4942:
            binary = chunk
    if gltf is None:
        raise ExportError("GLB has no JSON chunk")

    def read_accessor(idx: int) -> np.ndarray:
        acc = gltf["accessors"][idx]
        view = gltf["bufferViews"][acc["bufferView"]]
        start = view.get("byteOffset", 0)
        raw = binary[start:start + view["byteLength"]]
        dtype = {_F32: "<f4", _U16: "<u2", _U32: "<u4"}[acc["componentType"]]
        width = {"SCALAR": 1, "VEC3": 3, "VEC4": 4, "MAT4": 16}[acc["type"]]
        arr = np.frombuffer(raw, dtype=dtype, count=acc["count"] * width)
        return arr.reshape(acc["count"], width) if width > 1 else arr

    prim = gltf["meshes"][0]["primitives"][0]
    attrs = prim["attributes"]
    positions = read_accessor(attrs["POSITION"])
    faces = read_accessor(prim["indices"]).reshape(-1, 3).astype(np.int64)
    colors = read_accessor(attrs["COLOR_0"]) if "COLOR_0" in attrs else None

    skin = None
    if "skins" in gltf:
        sk = gltf["skins"][0]
        joints_nodes = sk["joints"]
        J = len(joints_nodes)
        parents = -np.ones(J, dtype=np.int64)
        locals_ = np.zeros((J, 3), dtype=np.float32)
        for jj, node_id in enumerate(joints_nodes):
            node = gltf["nodes"][node_id]
            locals_[jj] = np.asarray(node.get("translation", [0, 0, 0]), dtype=np.float32)
            for child in node.get("children", []):
                parents[joints_nodes.index(child)] = jj
        skin = SkinData(
            parents=parents,
            local_translations=locals_,
            inverse_bind=read_accessor(sk["inverseBindMatrices"]).reshape(-1, 4, 4),
            joints_0=read_accessor(attrs["JOINTS_0"]).astype(np.uint16),
            weights_0=read_accessor(attrs["WEIGHTS_0"]).astype(np.float32),
        )
    name = gltf["nodes"][0].get("name", "mesh")
    return {"positions": positions, "faces": faces, "colors": colors,
            "skin": skin, "name": name}
