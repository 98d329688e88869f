from dataclasses import replace

import numpy as np
import pytest

from lavatar import container as ct
from lavatar.bodymodel import (BodyModel, BodyModelError, ShapeParams, blend_shapes,
                               generate_test_body, lbs, load_body_model, regress_joints,
                               rodrigues, save_body_model, subdivide, undirected_edges,
                               validate_body_model)


def tiny_two_bone_model():
    """One triangle fully bound to the child of a two-joint chain."""
    verts = np.array([[2.0, 0.0, 0.0], [2.0, 0.1, 0.0], [2.0, 0.0, 0.1]])
    faces = np.array([[0, 1, 2]])
    weights = np.zeros((3, 2))
    weights[:, 1] = 1.0
    regressor = np.full((2, 3), 1.0 / 3.0)
    return BodyModel(
        template=verts, faces=faces,
        shape_basis=np.zeros((0, 3, 3)), expression_basis=np.zeros((0, 3, 3)),
        pose_basis=np.zeros((0, 3, 3)),
        joint_regressor=regressor, parents=np.array([-1, 0]),
        skin_weights=weights, part_labels=np.zeros(3, dtype=np.int64),
        part_names={0: "torso"},
    )


# ---------------------------------------------------------------------------
# generate_test_body
# ---------------------------------------------------------------------------

def test_generation_is_byte_deterministic():
    a = save_body_model(generate_test_body(7, 0))
    b = save_body_model(generate_test_body(7, 0))
    assert a == b


def test_generation_seed_changes_geometry():
    a = generate_test_body(7, 0)
    b = generate_test_body(8, 0)
    assert not np.array_equal(a.template, b.template)


def test_skin_weight_rows_normalized(body0):
    sums = body0.skin_weights.sum(axis=1)
    assert np.abs(sums - 1.0).max() <= 1e-6


def test_detail_vertex_counts_monotonic():
    v = [generate_test_body(7, d).vertex_count for d in (0, 1, 2)]
    assert v[0] < v[1] < v[2]
    assert v[2] >= 4000


def test_part_labels_cover_required_regions(body0):
    names = set(body0.part_names.values())
    assert len(set(body0.part_labels.tolist())) >= 10
    for region in ("torso", "hips", "head"):
        assert region in names
    for region in ("upper_arm", "lower_arm", "hand", "upper_leg", "lower_leg", "foot"):
        assert any(n.endswith(region) for n in names)


def test_shape_basis_has_meaningful_directions(body0):
    assert body0.num_shape_params >= 4
    for k in range(body0.num_shape_params):
        assert np.abs(body0.shape_basis[k]).max() > 0


# ---------------------------------------------------------------------------
# blend_shapes
# ---------------------------------------------------------------------------

def test_blend_zero_params_returns_template(body0):
    out = blend_shapes(body0, ShapeParams.rest(body0))
    assert np.array_equal(out, body0.template)


def test_blend_single_coefficient_vertex_by_vertex(body0):
    beta = np.zeros(body0.num_shape_params)
    beta[0] = 1.0
    params = ShapeParams(beta=beta, theta=np.zeros((body0.joint_count, 3)), psi=np.zeros(0))
    out = blend_shapes(body0, params)
    # brute-force oracle: loop every vertex and coordinate
    for v in range(body0.vertex_count):
        for c in range(3):
            expected = body0.template[v, c] + body0.shape_basis[0, v, c]
            assert out[v, c] == pytest.approx(expected, abs=1e-12)


def test_blend_is_linear_in_beta(body0, rng):
    a = rng.normal(size=body0.num_shape_params)
    b = rng.normal(size=body0.num_shape_params)
    theta = np.zeros((body0.joint_count, 3))
    blend = lambda bb: blend_shapes(body0, ShapeParams(bb, theta, np.zeros(0)))
    lhs = blend(a + b)
    rhs = blend(a) + blend(b) - body0.template
    assert np.abs(lhs - rhs).max() <= 1e-9


def test_blend_rejects_wrong_beta_length(body0):
    params = ShapeParams(beta=np.zeros(2), theta=np.zeros((body0.joint_count, 3)),
                         psi=np.zeros(0))
    with pytest.raises(BodyModelError, match="beta"):
        blend_shapes(body0, params)


# ---------------------------------------------------------------------------
# regress_joints
# ---------------------------------------------------------------------------

def test_regress_matches_dense_double_loop(body0):
    joints = regress_joints(body0, body0.template)
    J, V = body0.joint_regressor.shape
    oracle = np.zeros((J, 3))
    for j in range(J):
        for v in range(V):
            oracle[j] += body0.joint_regressor[j, v] * body0.template[v]
    assert np.abs(joints - oracle).max() <= 1e-9


def test_regress_translation_equivariance(body0, rng):
    t = rng.normal(size=3)
    base = regress_joints(body0, body0.template)
    moved = regress_joints(body0, body0.template + t)
    assert np.abs(moved - (base + t)).max() <= 1e-9


def test_regress_one_hot_rows_select_vertices(body0):
    model = replace(body0)
    regressor = np.zeros_like(body0.joint_regressor)
    picks = np.arange(body0.joint_count) * 3
    regressor[np.arange(body0.joint_count), picks] = 1.0
    model = replace(model, joint_regressor=regressor)
    joints = regress_joints(model, body0.template)
    assert np.array_equal(joints, body0.template[picks])


def test_regress_rejects_non_finite(body0):
    bad = body0.template.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        regress_joints(body0, bad)


# ---------------------------------------------------------------------------
# lbs
# ---------------------------------------------------------------------------

def test_lbs_rest_pose_is_identity(body0):
    rest = body0.template
    joints = regress_joints(body0, rest)
    posed = lbs(rest, joints, np.zeros((body0.joint_count, 3)), body0)
    assert np.abs(posed - rest).max() <= 1e-12


def test_lbs_two_bone_matches_closed_form():
    model = tiny_two_bone_model()
    joints = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    theta = np.zeros((2, 3))
    theta[1] = [0.0, 0.0, np.pi / 2.0]
    posed = lbs(model.template, joints, theta, model)
    # closed-form oracle: rigid rotation of each vertex about the child joint
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    expected = (model.template - joints[1]) @ rot.T + joints[1]
    assert np.abs(posed - expected).max() <= 1e-12


def test_lbs_root_rotation_is_global_rigid_motion(body0, rng):
    rest = body0.template
    joints = regress_joints(body0, rest)
    axis_angle = rng.normal(size=3)
    theta = np.zeros((body0.joint_count, 3))
    theta[0] = axis_angle
    posed = lbs(rest, joints, theta, body0)
    rot = rodrigues(axis_angle)
    expected = (rest - joints[0]) @ rot.T + joints[0]
    assert np.abs(posed - expected).max() <= 1e-6


def test_lbs_rejects_non_finite_rotation(body0):
    joints = regress_joints(body0, body0.template)
    theta = np.zeros((body0.joint_count, 3))
    theta[2, 1] = np.inf
    with pytest.raises(ValueError, match="finite"):
        lbs(body0.template, joints, theta, body0)


# ---------------------------------------------------------------------------
# subdivide
# ---------------------------------------------------------------------------

def test_subdivide_counts(body0):
    F = len(body0.faces)
    E = len(undirected_edges(body0.faces))
    out = subdivide(body0)
    assert len(out.faces) == 4 * F
    assert out.vertex_count == body0.vertex_count + E


def test_subdivide_commutes_with_blend(body0, rng):
    beta = rng.normal(size=body0.num_shape_params)
    theta = np.zeros((body0.joint_count, 3))
    sub = subdivide(body0)
    blended_after = blend_shapes(sub, ShapeParams(beta, theta, np.zeros(0)))
    # other order: subdivide a model whose template is the blended mesh
    blended_model = replace(body0, template=blend_shapes(
        body0, ShapeParams(beta, theta, np.zeros(0))))
    blended_before = subdivide(blended_model).template
    assert np.abs(blended_after - blended_before).max() <= 1e-9


def test_subdivide_weight_rows_renormalized(body0):
    out = subdivide(body0)
    sums = out.skin_weights.sum(axis=1)
    assert np.abs(sums - 1.0).max() <= 1e-6


def test_subdivide_midpoints_exact_on_planar_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    model = BodyModel(
        template=verts, faces=np.array([[0, 1, 2]]),
        shape_basis=np.zeros((0, 3, 3)), expression_basis=np.zeros((0, 3, 3)),
        pose_basis=np.zeros((0, 3, 3)),
        joint_regressor=np.full((1, 3), 1.0 / 3.0), parents=np.array([-1]),
        skin_weights=np.ones((3, 1)), part_labels=np.zeros(3, dtype=np.int64),
        part_names={0: "torso"})
    out = subdivide(model)
    mids = {tuple(np.round(0.5 * (verts[a] + verts[b]), 12)) for a, b in [(0, 1), (1, 2), (0, 2)]}
    new = {tuple(np.round(v, 12)) for v in out.template[3:]}
    assert new == mids


def test_subdivide_label_tie_break_uses_lower_endpoint_index():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    model = BodyModel(
        template=verts, faces=np.array([[0, 1, 2]]),
        shape_basis=np.zeros((0, 3, 3)), expression_basis=np.zeros((0, 3, 3)),
        pose_basis=np.zeros((0, 3, 3)),
        joint_regressor=np.full((1, 3), 1.0 / 3.0), parents=np.array([-1]),
        skin_weights=np.ones((3, 1)),
        part_labels=np.array([5, 9, 7], dtype=np.int64),
        part_names={5: "torso", 9: "hips", 7: "head"})
    out = subdivide(model)
    # midpoints of edges (0,1), (1,2), (0,2) take labels of vertices 0, 1, 0
    edge_labels = {tuple(np.round(v, 12)): l
                   for v, l in zip(out.template[3:], out.part_labels[3:])}
    assert edge_labels[tuple(np.round(0.5 * (verts[0] + verts[1]), 12))] == 5
    assert edge_labels[tuple(np.round(0.5 * (verts[1] + verts[2]), 12))] == 9
    assert edge_labels[tuple(np.round(0.5 * (verts[0] + verts[2]), 12))] == 5


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_model_round_trip(body0):
    back = load_body_model(save_body_model(body0))
    assert back.vertex_count == body0.vertex_count
    assert back.joint_count == body0.joint_count
    assert np.array_equal(back.faces, body0.faces)
    assert np.array_equal(back.template, body0.template.astype(np.float32).astype(np.float64))
    assert back.part_names == body0.part_names
    # saving again is bit-identical
    assert save_body_model(back) == save_body_model(body0)


def test_load_rejects_bad_skin_row(body0):
    arrays = ct.read_container(save_body_model(body0))
    bad = arrays["skin_weights"].copy()
    bad[5] *= 0.5
    arrays["skin_weights"] = bad
    with pytest.raises(BodyModelError, match="row 5"):
        load_body_model(ct.write_container(arrays))


def test_load_rejects_truncated_stream(body0):
    blob = save_body_model(body0)
    with pytest.raises(ct.ContainerError, match="offset"):
        load_body_model(blob[: len(blob) // 2])


def test_load_rejects_missing_mandatory_array(body0):
    arrays = ct.read_container(save_body_model(body0))
    del arrays["joint_regressor"]
    with pytest.raises(BodyModelError, match="joint_regressor"):
        load_body_model(ct.write_container(arrays))


def test_validate_rejects_cycle(body0):
    bad = replace(body0, parents=body0.parents.copy())
    bad.parents[1] = 2
    bad.parents[2] = 1
    with pytest.raises(BodyModelError, match="cycle|root"):
        validate_body_model(bad)
