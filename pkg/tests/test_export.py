import json
import struct

import numpy as np
import pytest

from lavatar.assets import model_hash
from lavatar.bodymodel import regress_joints
from lavatar.export import export_glb, export_obj, load_glb, skin_from_model
from lavatar.layering import GarmentType, compose_body, extract_clothes, new_garment, BodyLayer

from oracle_readers import parse_glb_positions, parse_obj


def test_unit_triangle_obj_reimport_identical():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    colors = np.array([[1.0, 0.0, 0.0]] * 3)
    data = export_obj(verts, np.array([[0, 1, 2]]), colors)
    v, c, f = parse_obj(data)
    assert np.array_equal(v, verts)
    assert np.array_equal(c, colors)
    assert np.array_equal(f, [[0, 1, 2]])


def test_obj_reimport_round_trips_f32_values(rng):
    verts = rng.normal(size=(20, 3))
    colors = rng.uniform(size=(20, 3))
    faces = rng.integers(0, 20, size=(9, 3))
    v, c, f = parse_obj(export_obj(verts, faces, colors))
    assert np.array_equal(v.astype(np.float32), verts.astype(np.float32))
    assert np.array_equal(c.astype(np.float32), colors.astype(np.float32))
    assert np.array_equal(f, faces)


def test_glb_reimport_positions_identical(body0, rng):
    mesh = compose_body(body0, BodyLayer(beta=rng.normal(size=body0.num_shape_params),
                                         offsets=np.zeros((body0.vertex_count, 3))))
    colors = rng.uniform(size=mesh.shape)
    joints = regress_joints(body0, mesh)
    skin = skin_from_model(body0, joints)
    blob = export_glb(mesh, body0.faces, colors, skin)
    pos, idx, col = parse_glb_positions(blob)
    assert np.array_equal(pos, mesh.astype(np.float32))
    assert np.array_equal(idx, body0.faces)
    assert np.array_equal(col, colors.astype(np.float32))


def test_glb_export_import_export_idempotent(body0, rng):
    mesh = body0.template
    colors = rng.uniform(size=mesh.shape)
    skin = skin_from_model(body0, regress_joints(body0, mesh))
    blob1 = export_glb(mesh, body0.faces, colors, skin, name="body")
    back = load_glb(blob1)
    blob2 = export_glb(back["positions"], back["faces"], back["colors"], back["skin"],
                       name=back["name"])
    assert blob1 == blob2


def test_glb_export_is_deterministic(body0, rng):
    colors = rng.uniform(size=body0.template.shape)
    a = export_glb(body0.template, body0.faces, colors)
    b = export_glb(body0.template, body0.faces, colors)
    assert a == b


def test_glb_skin_round_trip(body0):
    skin = skin_from_model(body0, regress_joints(body0, body0.template))
    blob = export_glb(body0.template, body0.faces, None, skin)
    back = load_glb(blob)["skin"]
    assert np.array_equal(back.parents, skin.parents)
    assert np.array_equal(back.local_translations, skin.local_translations)
    assert np.array_equal(back.inverse_bind, skin.inverse_bind)
    assert np.array_equal(back.joints_0, skin.joints_0)
    assert np.array_equal(back.weights_0, skin.weights_0)
    # weights stay normalized after the top-4 truncation
    assert np.abs(back.weights_0.sum(axis=1) - 1.0).max() <= 1e-6


def test_extracted_vest_exports_only_masked_vertices(body0, rng):
    garment = new_garment(body0, GarmentType.VEST)
    base = compose_body(body0, BodyLayer(beta=np.zeros(body0.num_shape_params),
                                         offsets=np.zeros((body0.vertex_count, 3))))
    sub = extract_clothes(base, garment, body0.faces, body0)
    blob = export_glb(sub.vertices, sub.faces, None, None)
    pos, idx, _ = parse_glb_positions(blob)
    assert len(pos) == int(garment.mask.sum())
    assert np.array_equal(pos, sub.vertices.astype(np.float32))


def test_glb_chunks_are_four_byte_aligned(body0):
    blob = export_glb(body0.template[:5], np.array([[0, 1, 2], [1, 2, 3]]))
    total = struct.unpack_from("<I", blob, 8)[0]
    assert total == len(blob)
    json_len = struct.unpack_from("<I", blob, 12)[0]
    assert json_len % 4 == 0
    bin_len = struct.unpack_from("<I", blob, 20 + json_len)[0]
    assert bin_len % 4 == 0
