"""Parametric body model: template + blend shapes + joint regression + skinning.

The model follows the usual linear-blend-skinning family layout: a mean
template mesh, additive shape/expression/pose bases, a row-stochastic joint
regressor, a kinematic tree, and per-vertex skinning weights. A procedural
capsule-limb test body ships alongside so everything runs without licensed
model assets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container as ct


class BodyModelError(ValueError):
    pass


@dataclass
class BodyModel:
    """Immutable parametric body. Arrays are float64 in memory, f32 on disk."""

    template: np.ndarray        # (V, 3) meters
    faces: np.ndarray           # (F, 3) int64
    shape_basis: np.ndarray     # (Ks, V, 3)
    expression_basis: np.ndarray  # (Ke, V, 3), may be empty
    pose_basis: np.ndarray      # (Kp, V, 3), Kp = 9*(J-1) when nonempty
    joint_regressor: np.ndarray  # (J, V) row-stochastic
    parents: np.ndarray         # (J,) int64, root = -1
    skin_weights: np.ndarray    # (V, J)
    part_labels: np.ndarray     # (V,) int64
    part_names: dict[int, str] = field(default_factory=dict)

    @property
    def vertex_count(self) -> int:
        return self.template.shape[0]

    @property
    def joint_count(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def num_shape_params(self) -> int:
        return self.shape_basis.shape[0]

    def region_labels(self, region: str) -> list[int]:
        """Labels whose name matches `region` after stripping left_/right_."""
        out = []
        for label, name in self.part_names.items():
            base = name
            for prefix in ("left_", "right_"):
                if base.startswith(prefix):
                    base = base[len(prefix):]
            if base == region:
                out.append(label)
        return sorted(out)


@dataclass
class ShapeParams:
    """Coefficients driving the bases: shape beta, pose theta, expression psi."""

    beta: np.ndarray   # (Ks,)
    theta: np.ndarray  # (J, 3) axis-angle
    psi: np.ndarray    # (Ke,)

    @staticmethod
    def rest(model: BodyModel) -> "ShapeParams":
        return ShapeParams(
            beta=np.zeros(model.num_shape_params),
            theta=np.zeros((model.joint_count, 3)),
            psi=np.zeros(model.expression_basis.shape[0]),
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def undirected_edges(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges (E, 2) with min index first, lexicographic."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def validate_body_model(m: BodyModel) -> None:
    """Raise BodyModelError naming the first violated invariant."""
    V = m.template.shape[0]
    J = m.joint_regressor.shape[0]
    if m.template.ndim != 2 or m.template.shape[1] != 3:
        raise BodyModelError(f"template must be (V,3), got {m.template.shape}")
    if not np.isfinite(m.template).all():
        raise BodyModelError("template has non-finite entries")
    if m.faces.size and (m.faces.min() < 0 or m.faces.max() >= V):
        raise BodyModelError("faces index out-of-range vertices")

    row_sum = m.joint_regressor.sum(axis=1)
    bad = np.where(np.abs(row_sum - 1.0) > 1e-6)[0]
    if bad.size:
        raise BodyModelError(f"joint regressor row {bad[0]} sums to {row_sum[bad[0]]:.8f}")
    if (m.joint_regressor < -1e-9).any():
        raise BodyModelError("joint regressor has negative entries")

    if m.skin_weights.shape != (V, J):
        raise BodyModelError(f"skin weights must be (V,J)=({V},{J}), got {m.skin_weights.shape}")
    w_sum = m.skin_weights.sum(axis=1)
    bad = np.where(np.abs(w_sum - 1.0) > 1e-6)[0]
    if bad.size:
        raise BodyModelError(f"skin-weight row {bad[0]} sums to {w_sum[bad[0]]:.8f}")
    if (m.skin_weights < -1e-9).any():
        raise BodyModelError("skin weights have negative entries")
    nnz = (m.skin_weights > 0).sum(axis=1)
    if (nnz > 8).any():
        raise BodyModelError(f"skin-weight row {int(np.argmax(nnz))} has more than 8 nonzeros")

    roots = np.where(m.parents < 0)[0]
    if roots.size != 1:
        raise BodyModelError(f"kinematic tree must have exactly one root, found {roots.size}")
    for j in range(J):
        seen, k = set(), j
        while m.parents[k] >= 0:
            if k in seen:
                raise BodyModelError(f"kinematic tree has a cycle through joint {j}")
            seen.add(k)
            k = int(m.parents[k])

    # edge-manifold: every undirected edge borders at most two faces
    e = np.concatenate([m.faces[:, [0, 1]], m.faces[:, [1, 2]], m.faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if (counts > 2).any():
        raise BodyModelError("mesh is not edge-manifold (an edge borders >2 faces)")

    for name, basis in (("shape", m.shape_basis), ("expression", m.expression_basis),
                        ("pose", m.pose_basis)):
        if basis.size and basis.shape[1:] != (V, 3):
            raise BodyModelError(f"{name} basis must be (K,{V},3), got {basis.shape}")
    if m.pose_basis.size and m.pose_basis.shape[0] != 9 * (J - 1):
        raise BodyModelError(f"pose basis must have 9*(J-1)={9*(J-1)} rows")


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Axis-angle (..., 3) -> rotation matrices (..., 3, 3)."""
    aa = np.asarray(axis_angle, dtype=np.float64)
    if not np.isfinite(aa).all():
        raise ValueError("non-finite rotation")
    theta = np.linalg.norm(aa, axis=-1, keepdims=True)
    small = theta < 1e-12
    axis = np.where(small, 0.0, aa / np.where(small, 1.0, theta))
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    K = np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)
    s = np.sin(theta)[..., None]
    c = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + s * K + (1.0 - c) * (K @ K)


def pose_features(theta: np.ndarray) -> np.ndarray:
    """Flattened rotation-matrix deltas of the non-root joints: (9*(J-1),)."""
    R = rodrigues(np.asarray(theta)[1:])
    return (R - np.eye(3)).reshape(-1)


def blend_shapes(model: BodyModel, params: ShapeParams) -> np.ndarray:
    """Rest mesh = template + shape, expression and pose basis contributions."""
    beta = np.asarray(params.beta, dtype=np.float64)
    psi = np.asarray(params.psi, dtype=np.float64)
    if beta.shape != (model.num_shape_params,):
        raise BodyModelError(f"beta length {beta.shape} != {model.num_shape_params}")
    Ke = model.expression_basis.shape[0] if model.expression_basis.size else 0
    if psi.shape != (Ke,):
        raise BodyModelError(f"psi length {psi.shape} != {Ke}")
    theta = np.asarray(params.theta, dtype=np.float64)
    if theta.shape != (model.joint_count, 3):
        raise BodyModelError(f"theta must be ({model.joint_count},3), got {theta.shape}")

    mesh = model.template.copy()
    if beta.size:
        mesh += np.einsum("k,kvc->vc", beta, model.shape_basis)
    if psi.size:
        mesh += np.einsum("k,kvc->vc", psi, model.expression_basis)
    if model.pose_basis.size:
        mesh += np.einsum("k,kvc->vc", pose_features(theta), model.pose_basis)
    return mesh


def regress_joints(model: BodyModel, rest_verts: np.ndarray) -> np.ndarray:
    """Joint positions = regressor @ rest vertices."""
    rest_verts = np.asarray(rest_verts, dtype=np.float64)
    if not np.isfinite(rest_verts).all():
        raise ValueError("rest vertices must be finite")
    return model.joint_regressor @ rest_verts


def joint_world_transforms(joints: np.ndarray, theta: np.ndarray,
                           parents: np.ndarray) -> np.ndarray:
    """Forward kinematics: (J, 4, 4) world transforms for axis-angle pose."""
    J = joints.shape[0]
    R = rodrigues(theta)
    G = np.zeros((J, 4, 4))
    order = _topo_order(parents)
    for j in order:
        p = int(parents[j])
        local = np.eye(4)
        local[:3, :3] = R[j]
        local[:3, 3] = joints[j] - (joints[p] if p >= 0 else 0.0)
        G[j] = local if p < 0 else G[p] @ local
    return G


def _topo_order(parents: np.ndarray) -> list[int]:
    J = len(parents)
    order, placed = [], np.zeros(J, dtype=bool)
    while len(order) < J:
        for j in range(J):
            p = int(parents[j])
            if not placed[j] and (p < 0 or placed[p]):
                order.append(j)
                placed[j] = True
    return order


def lbs(rest_mesh: np.ndarray, joints: np.ndarray, theta: np.ndarray,
        model: BodyModel) -> np.ndarray:
    """Pose the rest mesh by blending per-joint rigid transforms.

    World transforms come from the kinematic chain; each is made relative to
    the rest skeleton (G' = G * inv(rest)) before per-vertex blending.
    """
    rest_mesh = np.asarray(rest_mesh, dtype=np.float64)
    G = joint_world_transforms(np.asarray(joints, dtype=np.float64), theta, model.parents)
    # rest transform of joint j is a pure translation by joints[j]
    Grel = G.copy()
    Grel[:, :3, 3] -= np.einsum("jab,jb->ja", G[:, :3, :3], np.asarray(joints, dtype=np.float64))
    T = np.einsum("vj,jab->vab", model.skin_weights, Grel)
    return np.einsum("vab,vb->va", T[:, :3, :3], rest_mesh) + T[:, :3, 3]


def posed_mesh(model: BodyModel, params: ShapeParams) -> np.ndarray:
    """blend_shapes -> regress -> lbs in one call."""
    rest = blend_shapes(model, params)
    joints = regress_joints(model, rest)
    return lbs(rest, joints, params.theta, model)


# ---------------------------------------------------------------------------
# Subdivision
# ---------------------------------------------------------------------------

def subdivide(model: BodyModel) -> BodyModel:
    """Split every triangle 4-ways at edge midpoints; attributes averaged.

    New skin-weight rows are averaged, truncated to the 8 largest entries and
    renormalized. New part labels take the label of the lower-indexed edge
    endpoint. The joint regressor gains zero columns for the new vertices.
    """
    V = model.vertex_count
    faces = model.faces
    edge_index: dict[tuple[int, int], int] = {}
    mids = []
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (int(min(a, b)), int(max(a, b)))
            if key not in edge_index:
                edge_index[key] = V + len(mids)
                mids.append(key)
    e = np.asarray(mids, dtype=np.int64)  # (E, 2), lower index first

    def avg_rows(arr):  # average along the vertex axis (last-but-one)
        return 0.5 * (arr[..., e[:, 0], :] + arr[..., e[:, 1], :])

    template = np.concatenate([model.template, avg_rows(model.template)], axis=0)

    def extend_basis(basis):
        if not basis.size:
            return basis.reshape(basis.shape[0], template.shape[0], 3)[:0] if basis.ndim == 3 else basis
        return np.concatenate([basis, avg_rows(basis)], axis=1)

    shape_basis = extend_basis(model.shape_basis)
    expr_basis = (np.concatenate([model.expression_basis, avg_rows(model.expression_basis)], axis=1)
                  if model.expression_basis.size else np.zeros((0, template.shape[0], 3)))
    pose_basis = (np.concatenate([model.pose_basis, avg_rows(model.pose_basis)], axis=1)
                  if model.pose_basis.size else np.zeros((0, template.shape[0], 3)))

    w_new = 0.5 * (model.skin_weights[e[:, 0]] + model.skin_weights[e[:, 1]])
    if w_new.shape[1] > 8:
        keep = np.argsort(w_new, axis=1)[:, -8:]
        trimmed = np.zeros_like(w_new)
        np.put_along_axis(trimmed, keep, np.take_along_axis(w_new, keep, axis=1), axis=1)
        w_new = trimmed
    w_new /= w_new.sum(axis=1, keepdims=True)
    skin_weights = np.concatenate([model.skin_weights, w_new], axis=0)

    labels = np.concatenate([model.part_labels, model.part_labels[e[:, 0]]])
    regressor = np.concatenate(
        [model.joint_regressor, np.zeros((model.joint_count, e.shape[0]))], axis=1)

    new_faces = []
    for f in faces:
        a, b, c = (int(f[0]), int(f[1]), int(f[2]))
        mab = edge_index[(min(a, b), max(a, b))]
        mbc = edge_index[(min(b, c), max(b, c))]
        mca = edge_index[(min(c, a), max(c, a))]
        new_faces += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]

    out = BodyModel(
        template=template,
        faces=np.asarray(new_faces, dtype=np.int64),
        shape_basis=shape_basis,
        expression_basis=expr_basis,
        pose_basis=pose_basis,
        joint_regressor=regressor,
        parents=model.parents.copy(),
        skin_weights=skin_weights,
        part_labels=labels,
        part_names=dict(model.part_names),
    )
    validate_body_model(out)
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_MANDATORY = ("template", "faces", "shape_basis", "joint_regressor", "parents",
              "skin_weights", "part_labels")


def save_body_model(model: BodyModel) -> bytes:
    arrays: dict[str, np.ndarray] = {
        "template": model.template.astype(np.float32),
        "faces": model.faces.astype(np.uint32),
        "shape_basis": model.shape_basis.astype(np.float32),
        "joint_regressor": model.joint_regressor.astype(np.float32),
        "parents": model.parents.astype(np.int32),
        "skin_weights": model.skin_weights.astype(np.float32),
        "part_labels": model.part_labels.astype(np.int32),
    }
    if model.expression_basis.size:
        arrays["expression_basis"] = model.expression_basis.astype(np.float32)
    if model.pose_basis.size:
        arrays["pose_basis"] = model.pose_basis.astype(np.float32)
    if model.part_names:
        arrays["part_names"] = ct.pack_json({str(k): v for k, v in model.part_names.items()})
    return ct.write_container(arrays)


def load_body_model(stream: bytes) -> BodyModel:
    arrays = ct.read_container(stream)
    missing = [n for n in _MANDATORY if n not in arrays]
    if missing:
        raise BodyModelError(f"container missing mandatory arrays: {missing}")
    V = arrays["template"].shape[0]
    names = {}
    if "part_names" in arrays:
        names = {int(k): v for k, v in ct.unpack_json(arrays["part_names"]).items()}
    J = arrays["joint_regressor"].shape[0]
    model = BodyModel(
        template=arrays["template"].astype(np.float64),
        faces=arrays["faces"].astype(np.int64).reshape(-1, 3),
        shape_basis=arrays["shape_basis"].astype(np.float64).reshape(-1, V, 3),
        expression_basis=(arrays["expression_basis"].astype(np.float64).reshape(-1, V, 3)
                          if "expression_basis" in arrays else np.zeros((0, V, 3))),
        pose_basis=(arrays["pose_basis"].astype(np.float64).reshape(-1, V, 3)
                    if "pose_basis" in arrays else np.zeros((0, V, 3))),
        joint_regressor=arrays["joint_regressor"].astype(np.float64),
        parents=arrays["parents"].astype(np.int64).reshape(J),
        skin_weights=arrays["skin_weights"].astype(np.float64),
        part_labels=arrays["part_labels"].astype(np.int64).reshape(V),
        part_names=names,
    )
    validate_body_model(model)
    return model


# ---------------------------------------------------------------------------
# Procedural test body
# ---------------------------------------------------------------------------

_JOINT_NAMES = [
    "pelvis", "spine", "chest", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle",
]
_PARENTS = np.array([-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14], dtype=np.int64)

_PART_NAMES = {
    0: "torso", 1: "hips", 2: "head",
    3: "left_upper_arm", 4: "left_lower_arm", 5: "left_hand",
    6: "right_upper_arm", 7: "right_lower_arm", 8: "right_hand",
    9: "left_upper_leg", 10: "left_lower_leg", 11: "left_foot",
    12: "right_upper_leg", 13: "right_lower_leg", 14: "right_foot",
}


def _capsule(p0, p1, r0, r1, rings, segments):
    """Closed tapered tube from p0 to p1; returns (verts, faces, axis_t)."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    d = axis / length
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(ref, d)
    u /= np.linalg.norm(u)
    w = np.cross(d, u)

    verts, tvals = [], []
    phi = 2.0 * np.pi * np.arange(segments) / segments
    ring_dirs = np.outer(np.cos(phi), u) + np.outer(np.sin(phi), w)
    for i in range(rings):
        t = (i + 1) / (rings + 1)
        r = (1 - t) * r0 + t * r1
        center = p0 + t * axis
        verts.append(center + r * ring_dirs)
        tvals.extend([t] * segments)
    verts = np.concatenate(verts, axis=0)
    verts = np.concatenate([verts, p0[None], p1[None]], axis=0)
    tvals += [0.0, 1.0]
    pole0, pole1 = len(verts) - 2, len(verts) - 1

    faces = []
    for j in range(segments):
        jn = (j + 1) % segments
        faces.append((pole0, jn, j))  # bottom fan
        top = (rings - 1) * segments
        faces.append((pole1, top + j, top + jn))  # top fan
    for i in range(rings - 1):
        a, b = i * segments, (i + 1) * segments
        for j in range(segments):
            jn = (j + 1) % segments
            faces.append((a + j, a + jn, b + jn))
            faces.append((a + j, b + jn, b + j))
    return verts, np.asarray(faces, dtype=np.int64), np.asarray(tvals)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def generate_test_body(seed: int, detail: int) -> BodyModel:
    """Deterministic capsule-limb humanoid standing in a natural A stance.

    detail 0 is ~400 vertices / 16 joints; each level doubles ring and
    segment counts. The shape basis has four meaningful directions: height,
    girth, limb length and shoulder width.
    """
    if detail not in (0, 1, 2):
        raise ValueError("detail must be 0, 1 or 2")
    rng = np.random.default_rng(seed)
    jit = 1.0 + 0.05 * (rng.random(8) - 0.5)  # per-body proportion jitter

    joints = np.array([
        [0.00, 0.95, 0.00],   # pelvis
        [0.00, 1.10, 0.00],   # spine
        [0.00, 1.30, 0.00],   # chest
        [0.00, 1.58, 0.00],   # head (neck base)
        [0.18, 1.45, 0.00], [0.44, 1.22, 0.00], [0.66, 1.00, 0.00],    # left arm
        [-0.18, 1.45, 0.00], [-0.44, 1.22, 0.00], [-0.66, 1.00, 0.00],  # right arm
        [0.09, 0.90, 0.00], [0.10, 0.50, 0.00], [0.11, 0.08, 0.00],     # left leg
        [-0.09, 0.90, 0.00], [-0.10, 0.50, 0.00], [-0.11, 0.08, 0.00],  # right leg
    ])
    torso_r = 0.155 * jit[0]
    hip_r = 0.150 * jit[1]
    head_r = 0.085 * jit[2]
    arm_r = 0.050 * jit[3]
    leg_r = 0.075 * jit[4]

    s = 8 * (2 ** detail)
    mul = 2 ** detail

    def rg(n):
        return n * mul

    hand_l = joints[6] + np.array([0.10, -0.06, 0.0])
    hand_r = joints[9] + np.array([-0.10, -0.06, 0.0])
    foot_l = joints[12] + np.array([0.0, -0.05, 0.16])
    foot_r = joints[15] + np.array([0.0, -0.05, 0.16])

    # (label, p0, p1, r0, r1, rings, bind spec)
    parts = [
        (0, [0, 0.98, 0], [0, 1.50, 0], torso_r, 0.90 * torso_r, rg(5), ("chain", [0, 1, 2])),
        (1, [0, 0.80, 0], [0, 1.00, 0], 0.92 * hip_r, hip_r, rg(3), ("single", 0)),
        (2, [0, 1.56, 0], [0, 1.82, 0], 0.55 * head_r, head_r, rg(4), ("single", 3)),
        (3, joints[4], joints[5], 1.1 * arm_r, 0.9 * arm_r, rg(3), ("bone", 4, 5)),
        (4, joints[5], joints[6], 0.85 * arm_r, 0.65 * arm_r, rg(3), ("bone", 5, 6)),
        (5, joints[6], hand_l, 0.7 * arm_r, 0.35 * arm_r, rg(2), ("single", 6)),
        (6, joints[7], joints[8], 1.1 * arm_r, 0.9 * arm_r, rg(3), ("bone", 7, 8)),
        (7, joints[8], joints[9], 0.85 * arm_r, 0.65 * arm_r, rg(3), ("bone", 8, 9)),
        (8, joints[9], hand_r, 0.7 * arm_r, 0.35 * arm_r, rg(2), ("single", 9)),
        (9, joints[10], joints[11], 1.15 * leg_r, 0.75 * leg_r, rg(3), ("bone", 10, 11)),
        (10, joints[11], joints[12], 0.7 * leg_r, 0.5 * leg_r, rg(3), ("bone", 11, 12)),
        (11, joints[12], foot_l, 0.55 * leg_r, 0.4 * leg_r, rg(2), ("single", 12)),
        (12, joints[13], joints[14], 1.15 * leg_r, 0.75 * leg_r, rg(3), ("bone", 13, 14)),
        (13, joints[14], joints[15], 0.7 * leg_r, 0.5 * leg_r, rg(3), ("bone", 14, 15)),
        (14, joints[15], foot_r, 0.55 * leg_r, 0.4 * leg_r, rg(2), ("single", 15)),
    ]

    J = len(_PARENTS)
    all_verts, all_faces, all_labels, all_weights = [], [], [], []
    offset = 0
    for label, p0, p1, r0, r1, rings, bind in parts:
        v, f, t = _capsule(p0, p1, r0, r1, rings, s)
        all_verts.append(v)
        all_faces.append(f + offset)
        all_labels.append(np.full(len(v), label, dtype=np.int64))
        w = np.zeros((len(v), J))
        if bind[0] == "single":
            w[:, bind[1]] = 1.0
        elif bind[0] == "bone":
            prox, dist = bind[1], bind[2]
            blend = 0.5 * _smoothstep((t - 0.7) / 0.3)
            w[:, prox] = 1.0 - blend
            w[:, dist] = blend
        else:  # chain binding over torso joints by height
            stations = np.array([0.95, 1.10, 1.30, 1.55])
            chain = bind[1]
            y = v[:, 1]
            for vi in range(len(v)):
                yi = np.clip(y[vi], stations[0], stations[-1])
                k = min(int(np.searchsorted(stations, yi, side="right") - 1), len(chain) - 1)
                if k >= len(chain) - 1:
                    w[vi, chain[-1]] = 1.0
                else:
                    a = (yi - stations[k]) / (stations[k + 1] - stations[k])
                    w[vi, chain[k]] = 1.0 - a
                    w[vi, chain[k + 1]] = a
        all_weights.append(w)
        offset += len(v)

    template = np.concatenate(all_verts, axis=0)
    faces = np.concatenate(all_faces, axis=0)
    labels = np.concatenate(all_labels)
    weights = np.concatenate(all_weights, axis=0)
    weights /= weights.sum(axis=1, keepdims=True)
    V = len(template)

    # joint regressor: uniform weights over the 6 vertices nearest each joint
    regressor = np.zeros((J, V))
    for j in range(J):
        d = np.linalg.norm(template - joints[j], axis=1)
        nearest = np.argsort(d)[:6]
        regressor[j, nearest] = 1.0 / 6.0

    # shape basis: height, girth, limb length, shoulder width
    y = template[:, 1]
    height = np.zeros((V, 3))
    height[:, 1] = 0.10 * (y - y.min())

    girth = np.zeros((V, 3))
    radial = template.copy()
    radial[:, 1] = 0.0
    torso_like = np.isin(labels, [0, 1])
    limb_like = np.isin(labels, [3, 4, 6, 7, 9, 10, 12, 13])
    norm = np.linalg.norm(radial, axis=1, keepdims=True)
    radial = np.where(norm > 1e-9, radial / np.maximum(norm, 1e-9), 0.0)
    girth[torso_like] = 0.05 * radial[torso_like]
    girth[limb_like] = 0.02 * radial[limb_like]

    limb = np.zeros((V, 3))
    arm_parts = {3: 4, 4: 4, 5: 4, 6: 7, 7: 7, 8: 7}  # part -> shoulder joint
    for part, shoulder in arm_parts.items():
        sel = labels == part
        vec = template[sel] - joints[shoulder]
        sign = 1.0 if shoulder == 4 else -1.0
        axis = np.array([sign * 0.7, -0.7, 0.0])
        proj = vec @ axis
        limb[sel] = 0.12 * np.clip(proj, 0.0, None)[:, None] * axis[None, :]
    leg_parts = [9, 10, 11, 12, 13, 14]
    sel = np.isin(labels, leg_parts)
    drop = np.clip(0.90 - template[sel, 1], 0.0, None)
    limb[sel, 1] -= 0.12 * drop

    shoulder_w = np.zeros((V, 3))
    wgt = _smoothstep((np.abs(template[:, 0]) - 0.10) / 0.15)
    shoulder_w[:, 0] = np.sign(template[:, 0]) * 0.06 * wgt * (template[:, 1] > 0.95)

    shape_basis = np.stack([height, girth, limb, shoulder_w], axis=0)

    model = BodyModel(
        template=template,
        faces=faces,
        shape_basis=shape_basis,
        expression_basis=np.zeros((0, V, 3)),
        pose_basis=np.zeros((0, V, 3)),
        joint_regressor=regressor,
        parents=_PARENTS.copy(),
        skin_weights=weights,
        part_labels=labels,
        part_names=dict(_PART_NAMES),
    )
    validate_body_model(model)
    return model


def joint_names() -> list[str]:
    return list(_JOINT_NAMES)
