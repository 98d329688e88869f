import numpy as np
import pytest

from lavatar.layering import (BodyLayer, GarmentLayer, GarmentType, LayeringError,
                              compose_body, compose_clothed, compose_layers,
                              extract_clothes, garment_mask_template, new_garment,
                              refit_garment)


def make_body(model, beta=None, offsets=None):
    return BodyLayer(
        beta=np.zeros(model.num_shape_params) if beta is None else np.asarray(beta, float),
        offsets=np.zeros((model.vertex_count, 3)) if offsets is None else offsets,
    )


# ---------------------------------------------------------------------------
# mask templates
# ---------------------------------------------------------------------------

def test_vest_mask_is_exactly_torso(body0):
    mask = garment_mask_template(body0, GarmentType.VEST)
    torso_labels = body0.region_labels("torso")
    expected = np.isin(body0.part_labels, torso_labels).astype(np.int64)
    assert np.array_equal(mask, expected)


def test_short_pants_subset_of_long_pants(body0):
    short = garment_mask_template(body0, GarmentType.SHORT_PANTS)
    long_ = garment_mask_template(body0, GarmentType.LONG_PANTS)
    assert ((short == 1) <= (long_ == 1)).all()
    assert short.sum() < long_.sum()


def test_overalls_equal_union_of_torso_and_long_pants(body0):
    overalls = set(np.where(garment_mask_template(body0, GarmentType.OVERALLS))[0])
    # explicit set-union oracle over part labels
    torso = set(np.where(np.isin(body0.part_labels, body0.region_labels("torso")))[0])
    pants = set(np.where(garment_mask_template(body0, GarmentType.LONG_PANTS))[0])
    assert overalls == torso | pants


def test_masks_never_touch_head_hands_feet(body0):
    excluded = []
    for region in ("head", "hand", "foot"):
        excluded += body0.region_labels(region)
    for gtype in GarmentType:
        mask = garment_mask_template(body0, gtype)
        assert mask[np.isin(body0.part_labels, excluded)].sum() == 0


def test_mask_requires_part_labels(body0):
    from dataclasses import replace
    stripped = replace(body0, part_names={0: "torso"})
    with pytest.raises(LayeringError, match="upper_arm"):
        garment_mask_template(stripped, GarmentType.SHORT_SHIRT)


# ---------------------------------------------------------------------------
# compose_body
# ---------------------------------------------------------------------------

def test_compose_body_zero_offsets_matches_blend(body0):
    from lavatar.bodymodel import blend_shapes
    from lavatar.layering import a_pose_params
    body = make_body(body0)
    out = compose_body(body0, body)
    expected = blend_shapes(body0, a_pose_params(body0, body.beta))
    assert np.array_equal(out, expected)


def test_compose_body_uniform_offset_translates(body0):
    offsets = np.tile([0.0, 0.0, 0.01], (body0.vertex_count, 1))
    out = compose_body(body0, make_body(body0, offsets=offsets))
    base = compose_body(body0, make_body(body0))
    assert np.array_equal(out, base + [0.0, 0.0, 0.01])


def test_compose_body_random_offsets_per_vertex_oracle(body0, rng):
    offsets = 0.01 * rng.normal(size=(body0.vertex_count, 3))
    out = compose_body(body0, make_body(body0, offsets=offsets))
    base = compose_body(body0, make_body(body0))
    for v in range(0, body0.vertex_count, 7):
        for c in range(3):
            assert out[v, c] == base[v, c] + offsets[v, c]


# ---------------------------------------------------------------------------
# compose_clothed
# ---------------------------------------------------------------------------

def test_zero_mask_is_identity(body0, rng):
    base = compose_body(body0, make_body(body0))
    garment = GarmentLayer(GarmentType.VEST, np.zeros(body0.vertex_count, dtype=np.int64),
                           np.zeros((body0.vertex_count, 3)))
    assert np.array_equal(compose_clothed(base, garment), base)


def test_full_mask_adds_all_offsets(body0, rng):
    base = compose_body(body0, make_body(body0))
    offsets = 0.02 * rng.normal(size=(body0.vertex_count, 3))
    garment = GarmentLayer(GarmentType.VEST, np.ones(body0.vertex_count, dtype=np.int64),
                           offsets)
    assert np.array_equal(compose_clothed(base, garment), base + offsets)


def test_mixed_mask_per_vertex_oracle(body0, rng):
    base = compose_body(body0, make_body(body0))
    mask = garment_mask_template(body0, GarmentType.LONG_SHIRT)
    offsets = 0.02 * rng.normal(size=(body0.vertex_count, 3))
    offsets[mask == 0] = 0.0
    garment = GarmentLayer(GarmentType.LONG_SHIRT, mask, offsets)
    out = compose_clothed(base, garment)
    for v in range(body0.vertex_count):
        if mask[v]:
            assert np.array_equal(out[v], base[v] + offsets[v])
        else:
            assert np.array_equal(out[v], base[v])


def test_offsets_outside_mask_rejected(body0):
    mask = garment_mask_template(body0, GarmentType.VEST)
    offsets = np.ones((body0.vertex_count, 3))
    garment = GarmentLayer(GarmentType.VEST, mask, offsets)
    with pytest.raises(LayeringError, match="outside"):
        compose_clothed(compose_body(body0, make_body(body0)), garment)


def test_projection_enforces_mask_annihilation(body0, rng):
    garment = new_garment(body0, GarmentType.VEST)
    garment.offsets[:] = rng.normal(size=garment.offsets.shape)
    garment.project()
    assert np.abs(garment.offsets[garment.mask == 0]).max() == 0.0


# ---------------------------------------------------------------------------
# compose_layers
# ---------------------------------------------------------------------------

def test_single_layer_reduces_to_compose_clothed(body0, rng):
    base = compose_body(body0, make_body(body0))
    garment = new_garment(body0, GarmentType.VEST)
    garment.offsets[garment.mask == 1] = 0.01
    meshes = compose_layers(base, [garment])
    assert len(meshes) == 2
    assert np.array_equal(meshes[1], compose_clothed(base, garment))


def test_disjoint_layers_commute(body0):
    base = compose_body(body0, make_body(body0))
    vest = new_garment(body0, GarmentType.VEST, layer_order=0)
    pants = new_garment(body0, GarmentType.SHORT_PANTS, layer_order=1)
    assert (vest.mask * pants.mask).sum() == 0
    vest.offsets[vest.mask == 1] = 0.01
    pants.offsets[pants.mask == 1] = -0.02
    ab = compose_layers(base, [vest, pants])[-1]
    vest2 = GarmentLayer(vest.garment_type, vest.mask, vest.offsets, layer_order=1)
    pants2 = GarmentLayer(pants.garment_type, pants.mask, pants.offsets, layer_order=0)
    ba = compose_layers(base, [pants2, vest2])[-1]
    assert np.abs(ab - ba).max() <= 1e-12


def test_overlapping_layers_accumulate(body0, rng):
    base = compose_body(body0, make_body(body0))
    shirt = new_garment(body0, GarmentType.SHORT_SHIRT, layer_order=0)
    vest = new_garment(body0, GarmentType.VEST, layer_order=1)
    shirt.offsets[shirt.mask == 1] = rng.normal(size=(int(shirt.mask.sum()), 3)) * 0.01
    vest.offsets[vest.mask == 1] = rng.normal(size=(int(vest.mask.sum()), 3)) * 0.01
    out = compose_layers(base, [shirt, vest])[-1]
    # brute-force accumulation oracle
    expected = base.copy()
    for g in (shirt, vest):
        for v in range(body0.vertex_count):
            if g.mask[v]:
                expected[v] = expected[v] + g.offsets[v]
    assert np.abs(out - expected).max() == 0.0


def test_duplicate_layer_order_rejected(body0):
    base = compose_body(body0, make_body(body0))
    a = new_garment(body0, GarmentType.VEST, layer_order=0)
    b = new_garment(body0, GarmentType.SHORT_PANTS, layer_order=0)
    with pytest.raises(LayeringError, match="duplicate"):
        compose_layers(base, [a, b])


def test_no_layers_returns_body_only(body0):
    base = compose_body(body0, make_body(body0))
    meshes = compose_layers(base, [])
    assert len(meshes) == 1
    assert np.array_equal(meshes[0], base)


# ---------------------------------------------------------------------------
# extract_clothes
# ---------------------------------------------------------------------------

def test_extract_full_mask_is_whole_mesh(body0):
    base = compose_body(body0, make_body(body0))
    garment = GarmentLayer(GarmentType.VEST, np.ones(body0.vertex_count, dtype=np.int64),
                           np.zeros((body0.vertex_count, 3)))
    sub = extract_clothes(base, garment, body0.faces)
    assert np.array_equal(sub.parent_indices, np.arange(body0.vertex_count))
    assert np.array_equal(sub.vertices, base)
    assert np.array_equal(sub.faces, body0.faces)


def test_extract_vest_matches_label_set_and_positions(body0, rng):
    garment = new_garment(body0, GarmentType.VEST)
    garment.offsets[garment.mask == 1] = 0.01 * rng.normal(size=(int(garment.mask.sum()), 3))
    base = compose_body(body0, make_body(body0))
    clothed = compose_clothed(base, garment)
    sub = extract_clothes(clothed, garment, body0.faces, body0)
    torso = np.where(np.isin(body0.part_labels, body0.region_labels("torso")))[0]
    assert np.array_equal(sub.parent_indices, torso)
    # extracted positions equal the clothed positions bit-exactly
    for i, v in enumerate(sub.parent_indices):
        assert np.array_equal(sub.vertices[i], clothed[v])
    assert sub.skin_weights is not None
    assert np.array_equal(sub.skin_weights, body0.skin_weights[torso])


def test_extract_isolated_vertex_keeps_no_faces(body0):
    mask = np.zeros(body0.vertex_count, dtype=np.int64)
    mask[0] = 1
    garment = GarmentLayer(GarmentType.VEST, mask, np.zeros((body0.vertex_count, 3)))
    base = compose_body(body0, make_body(body0))
    sub = extract_clothes(base, garment, body0.faces)
    assert len(sub.vertices) == 1
    assert len(sub.faces) == 0


def test_extract_empty_mask_rejected(body0):
    garment = GarmentLayer(GarmentType.VEST, np.zeros(body0.vertex_count, dtype=np.int64),
                           np.zeros((body0.vertex_count, 3)))
    base = compose_body(body0, make_body(body0))
    with pytest.raises(LayeringError, match="empty"):
        extract_clothes(base, garment, body0.faces)


# ---------------------------------------------------------------------------
# refit_garment
# ---------------------------------------------------------------------------

def test_refit_on_same_body_is_identity(body0, rng):
    garment = new_garment(body0, GarmentType.VEST)
    garment.offsets[garment.mask == 1] = 0.01 * rng.normal(size=(int(garment.mask.sum()), 3))
    body = make_body(body0)
    original = compose_clothed(compose_body(body0, body), garment)
    assert np.array_equal(refit_garment(body0, garment, body), original)


def test_refit_preserves_displacement_field(body0, rng):
    garment = new_garment(body0, GarmentType.LONG_PANTS)
    garment.offsets[garment.mask == 1] = 0.02 * rng.normal(size=(int(garment.mask.sum()), 3))
    new_body = make_body(body0, beta=rng.normal(size=body0.num_shape_params))
    clothed = refit_garment(body0, garment, new_body)
    body_mesh = compose_body(body0, new_body)
    displacement = clothed - body_mesh
    assert np.abs(displacement - garment.offsets * garment.mask[:, None]).max() <= 1e-12


def test_refit_two_betas_satisfy_composition_identity(body0, rng):
    garment = new_garment(body0, GarmentType.SHORT_SHIRT)
    garment.offsets[garment.mask == 1] = 0.015 * rng.normal(size=(int(garment.mask.sum()), 3))
    for _ in range(2):
        body = make_body(body0, beta=rng.normal(size=body0.num_shape_params))
        clothed = refit_garment(body0, garment, body)
        # brute-force recomposition oracle
        base = compose_body(body0, body)
        expected = base + garment.offsets * garment.mask[:, None]
        assert np.abs(clothed - expected).max() == 0.0
