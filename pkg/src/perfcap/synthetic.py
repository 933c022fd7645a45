"""Synthetic capsule-person scenes with exact ground truth.

Everything downstream is validated against scenes built here: a rigged
capsule character, a surrounding camera ring, smooth random motion, an
optional ground-truth graph deformation (a soft-belly shrink), and rendered
observations (projected landmark detections plus silhouette masks).
Observation noise and dropout are opt-in and seeded.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import formats
from .camera import Camera, ObservationSet, save_observations, save_rig
from .character import (RigidityProfile, Skeleton, TriMesh, build_character,
                        save_character)
from .deform import GraphDeformation, deform_vertices
from .errors import InvalidInputError
from .kinematics import (PoseParams, forward_kinematics, landmark_positions,
                         node_skinning)
from .raster import render_mask


def capsule_mesh(p0, p1, radius, n_seg, n_cyl, n_cap):
    """Triangulated capsule from p0 to p1: two pole fans + latitude rings."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    L = np.linalg.norm(axis)
    if L < 1e-12:
        axis = np.array([0.0, 1.0, 0.0])
        L = 0.0
    else:
        axis = axis / L
    h = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(h, axis)
    x /= np.linalg.norm(x)
    y = np.cross(axis, x)
    rows = []
    for i in range(1, n_cap + 1):
        a = 0.5 * np.pi * i / (n_cap + 1)
        rows.append((-radius * np.cos(a), radius * np.sin(a)))
    for j in range(n_cyl + 2):
        rows.append((L * j / (n_cyl + 1), radius))
    for i in range(1, n_cap + 1):
        a = 0.5 * np.pi * i / (n_cap + 1)
        rows.append((L + radius * np.sin(a), radius * np.cos(a)))
    ang = 2.0 * np.pi * np.arange(n_seg) / n_seg
    ca, sa = np.cos(ang), np.sin(ang)
    verts = [p0 - radius * axis]
    for zc, rad in rows:
        ring = p0[None] + rad * (ca[:, None] * x[None] + sa[:, None] * y[None]) + zc * axis[None]
        verts.append(ring)
    verts.append(p1 + radius * axis)
    verts = np.concatenate([np.atleast_2d(v) for v in verts])
    tris = []
    n_rows = len(rows)
    top = 1 + n_rows * n_seg
    for j in range(n_seg):
        jn = (j + 1) % n_seg
        tris.append((0, 1 + jn, 1 + j))
    for i in range(n_rows - 1):
        a0 = 1 + i * n_seg
        b0 = 1 + (i + 1) * n_seg
        for j in range(n_seg):
            jn = (j + 1) % n_seg
            tris.append((a0 + j, a0 + jn, b0 + jn))
            tris.append((a0 + j, b0 + jn, b0 + j))
    last = 1 + (n_rows - 1) * n_seg
    for j in range(n_seg):
        jn = (j + 1) % n_seg
        tris.append((top, last + j, last + jn))
    return verts, np.asarray(tris, dtype=np.int64)


def _capsule_skeleton() -> Skeleton:
    joints = [
        ("pelvis", -1, (0, 0, 0)),
        ("spine", 0, (0, 0.25, 0)),
        ("neck", 1, (0, 0.25, 0)),
        ("head", 2, (0, 0.10, 0)),
        ("l_shoulder", 1, (0.20, 0.21, 0)),
        ("l_elbow", 4, (0.28, 0, 0)),
        ("l_wrist", 5, (0.26, 0, 0)),
        ("r_shoulder", 1, (-0.20, 0.21, 0)),
        ("r_elbow", 7, (-0.28, 0, 0)),
        ("r_wrist", 8, (-0.26, 0, 0)),
        ("l_hip", 0, (0.10, -0.05, 0)),
        ("l_knee", 10, (0, -0.42, 0)),
        ("l_ankle", 11, (0, -0.40, 0)),
        ("r_hip", 0, (-0.10, -0.05, 0)),
        ("r_knee", 13, (0, -0.42, 0)),
        ("r_ankle", 14, (0, -0.40, 0)),
    ]
    names = [j[0] for j in joints]
    jidx = {n: i for i, n in enumerate(names)}
    dofs = []
    for joint, axes, lim in [
        ("spine", "xyz", 0.6), ("neck", "xyz", 0.6), ("head", "x", 0.8),
        ("l_shoulder", "xyz", 1.2), ("l_elbow", "z", 1.8),
        ("r_shoulder", "xyz", 1.2), ("r_elbow", "z", 1.8),
        ("l_hip", "xyz", 1.0), ("l_knee", "x", 1.8), ("l_ankle", "xy", 0.6),
        ("r_hip", "xyz", 1.0), ("r_knee", "x", 1.8), ("r_ankle", "xy", 0.6),
    ]:
        for ax in axes:
            dofs.append((jidx[joint], "xyz".index(ax), -lim, lim))
    landmarks = [
        ("nose", "head", (0, 0.06, 0.09), "other"),
        ("neck", "neck", (0, 0, 0), "torso"),
        ("pelvis", "pelvis", (0, 0, 0), "torso"),
        ("l_shoulder", "l_shoulder", (0, 0, 0), "torso"),
        ("r_shoulder", "r_shoulder", (0, 0, 0), "torso"),
        ("l_elbow", "l_elbow", (0, 0, 0), "elbow_knee"),
        ("r_elbow", "r_elbow", (0, 0, 0), "elbow_knee"),
        ("l_wrist", "l_wrist", (0, 0, 0), "other"),
        ("r_wrist", "r_wrist", (0, 0, 0), "other"),
        ("l_hip", "l_hip", (0, 0, 0), "torso"),
        ("r_hip", "r_hip", (0, 0, 0), "torso"),
        ("l_knee", "l_knee", (0, 0, 0), "elbow_knee"),
        ("r_knee", "r_knee", (0, 0, 0), "elbow_knee"),
        ("l_ankle", "l_ankle", (0, 0, 0), "other"),
        ("r_ankle", "r_ankle", (0, 0, 0), "other"),
        ("l_toe", "l_ankle", (0, -0.03, 0.13), "other"),
        ("r_toe", "r_ankle", (0, -0.03, 0.13), "other"),
        ("l_eye", "head", (0.035, 0.10, 0.075), "other"),
        ("r_eye", "head", (-0.035, 0.10, 0.075), "other"),
        ("l_ear", "head", (0.075, 0.07, 0), "other"),
        ("r_ear", "head", (-0.075, 0.07, 0), "other"),
    ]
    eval_subset = ["nose", "neck", "l_shoulder", "r_shoulder", "l_elbow",
                   "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip",
                   "l_knee", "r_knee", "l_ankle", "r_ankle"]
    return Skeleton(
        joint_names=names,
        joint_parents=[j[1] for j in joints],
        joint_offsets=[j[2] for j in joints],
        dof_joint=[d[0] for d in dofs],
        dof_axis=[d[1] for d in dofs],
        theta_min=[d[2] for d in dofs],
        theta_max=[d[3] for d in dofs],
        landmark_names=[l[0] for l in landmarks],
        landmark_joints=[jidx[l[1]] for l in landmarks],
        landmark_offsets=[l[2] for l in landmarks],
        landmark_groups=[l[3] for l in landmarks],
        eval_landmarks=eval_subset,
    )


def _rest_origins(skeleton):
    J = skeleton.n_joints
    o = np.zeros((J, 3))
    for j in range(1, J):
        o[j] = o[skeleton.joint_parents[j]] + skeleton.joint_offsets[j]
    return o


# capsule name -> (proximal joint, distal point spec, radius)
_SOFT_CAPSULE = "torso_lower"
_BLEND_RADIUS = 0.09


def _capsule_table(skeleton):
    o = _rest_origins(skeleton)
    j = {n: i for i, n in enumerate(skeleton.joint_names)}

    def org(n):
        return o[j[n]]

    return [
        ("torso_lower", "pelvis", org("pelvis"), org("spine"), 0.14),
        ("torso_upper", "spine", org("spine"), org("neck"), 0.13),
        ("neck", "neck", org("neck"), org("head"), 0.06),
        ("head", "head", org("head"), org("head") + [0, 0.07, 0], 0.085),
        ("l_upper_arm", "l_shoulder", org("l_shoulder"), org("l_elbow"), 0.045),
        ("l_forearm", "l_elbow", org("l_elbow"), org("l_wrist"), 0.04),
        ("r_upper_arm", "r_shoulder", org("r_shoulder"), org("r_elbow"), 0.045),
        ("r_forearm", "r_elbow", org("r_elbow"), org("r_wrist"), 0.04),
        ("l_thigh", "l_hip", org("l_hip"), org("l_knee"), 0.07),
        ("l_shin", "l_knee", org("l_knee"), org("l_ankle"), 0.055),
        ("r_thigh", "r_hip", org("r_hip"), org("r_knee"), 0.07),
        ("r_shin", "r_knee", org("r_knee"), org("r_ankle"), 0.055),
        ("l_foot", "l_ankle", org("l_ankle"), org("l_ankle") + [0, -0.03, 0.12], 0.04),
        ("r_foot", "r_ankle", org("r_ankle"), org("r_ankle") + [0, -0.03, 0.12], 0.04),
    ]


def make_capsule_character(influences_per_vertex=4):
    """Build the test character: 14 capsules, 16 joints, 27 DOFs, 21 landmarks.

    Returns (character, info); info maps full-mesh vertices and graph nodes
    back to their capsule for scene construction.
    """
    skeleton = _capsule_skeleton()
    table = _capsule_table(skeleton)
    jidx = {n: i for i, n in enumerate(skeleton.joint_names)}
    fv, ft, dv, dt = [], [], [], []
    v_capsule, n_capsule = [], []
    for ci, (name, driver, p0, p1, r) in enumerate(table):
        v, t = capsule_mesh(p0, p1, r, n_seg=12, n_cyl=6, n_cap=3)
        ft.append(t + sum(len(a) for a in fv))
        fv.append(v)
        v_capsule.append(np.full(len(v), ci))
        v, t = capsule_mesh(p0, p1, r, n_seg=4, n_cyl=1, n_cap=1)
        dt.append(t + sum(len(a) for a in dv))
        dv.append(v)
        n_capsule.append(np.full(len(v), ci))
    mesh = TriMesh(np.concatenate(fv), np.concatenate(ft))
    decimated = TriMesh(np.concatenate(dv), np.concatenate(dt))
    v_capsule = np.concatenate(v_capsule)
    n_capsule = np.concatenate(n_capsule)
    names = [row[0] for row in table]
    soft_id = names.index(_SOFT_CAPSULE)
    soft = (v_capsule == soft_id) & (mesh.vertices[:, 1] >= -0.02) & (mesh.vertices[:, 1] <= 0.27)
    values = np.where(soft, 0.2, 1.0)
    rigidity = RigidityProfile(values=values,
                               class_names={"default": 1.0, "soft": 0.2},
                               vertex_class=soft.astype(np.int64))
    # node skin weights: the capsule's proximal joint, blended toward the
    # parent joint inside a small sphere around the joint origin
    origins = _rest_origins(skeleton)
    drivers = np.array([jidx[row[1]] for row in table])
    K = decimated.n_vertices
    skin = np.zeros((K, skeleton.n_joints))
    for k in range(K):
        j = drivers[n_capsule[k]]
        parent = skeleton.joint_parents[j]
        d = np.linalg.norm(decimated.vertices[k] - origins[j])
        if parent >= 0 and d < _BLEND_RADIUS:
            w = 0.5 + 0.5 * d / _BLEND_RADIUS
            skin[k, j] = w
            skin[k, parent] = 1.0 - w
        else:
            skin[k, j] = 1.0
    character = build_character(mesh, decimated, skeleton, rigidity, skin,
                                influences_per_vertex=influences_per_vertex)
    info = {"capsule_names": names, "vertex_capsule": v_capsule,
            "node_capsule": n_capsule, "soft_capsule": soft_id}
    return character, info


def look_at_camera(position, target, f, width, height, up=(0, 1, 0)) -> Camera:
    """CV-convention camera at `position` looking at `target`, v-down image."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise InvalidInputError("camera position equals target")
    z = z / nz
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise InvalidInputError("camera forward is parallel to up")
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    K = np.array([[f, 0.0, (width - 1) / 2.0],
                  [0.0, f, (height - 1) / 2.0],
                  [0.0, 0.0, 1.0]])
    return Camera(K=K, R=R, t=-R @ position, width=width, height=height)


def make_camera_rig(n_cameras=8, resolution=256, radius=3.0, target=(0, -0.05, 0)):
    """Ring of inward-looking cameras at two alternating heights."""
    f = 300.0 * resolution / 256.0
    cams = []
    for i in range(n_cameras):
        a = 2.0 * np.pi * i / n_cameras
        h = 0.3 if i % 2 == 0 else 1.1
        pos = (radius * np.sin(a), h, radius * np.cos(a))
        cams.append(look_at_camera(pos, target, f, resolution, resolution))
    return cams


def synth_motion(skeleton, n_frames, seed, amplitude=0.35):
    """Smooth low-frequency random motion inside the joint limits."""
    rng = np.random.Generator(np.random.PCG64(seed))
    D = skeleton.n_dofs
    f = np.arange(n_frames) / max(n_frames, 1)
    amp = rng.uniform(0.12, amplitude, D)
    margin = 0.6 * np.minimum(np.abs(skeleton.theta_min), np.abs(skeleton.theta_max))
    amp = np.minimum(amp, margin)
    cyc = rng.uniform(0.3, 0.8, D)
    phase = rng.uniform(0, 2 * np.pi, D)
    theta = amp[None] * np.sin(2 * np.pi * cyc[None] * f[:, None] + phase[None])
    a_amp = rng.uniform(0.08, 0.2, 3)
    a_cyc = rng.uniform(0.3, 0.8, 3)
    a_phase = rng.uniform(0, 2 * np.pi, 3)
    alpha = a_amp[None] * np.sin(2 * np.pi * a_cyc[None] * f[:, None] + a_phase[None])
    t_amp = np.array([0.10, 0.03, 0.10])
    t_cyc = rng.uniform(0.3, 0.6, 3)
    t_phase = rng.uniform(0, 2 * np.pi, 3)
    trans = t_amp[None] * np.sin(2 * np.pi * t_cyc[None] * f[:, None] + t_phase[None])
    return [PoseParams(theta[i], alpha[i], trans[i]) for i in range(n_frames)]


def synth_deformation(character, info, magnitude=0.35):
    """Ground-truth warp: shrink the soft belly radially toward the spine axis."""
    G = character.graph.node_positions
    sel = info["node_capsule"] == info["soft_capsule"]
    sel = sel & (G[:, 1] >= 0.0) & (G[:, 1] <= 0.25)
    T = np.zeros_like(G)
    radial = G.copy()
    radial[:, 1] = 0.0
    T[sel] = -magnitude * radial[sel]
    return GraphDeformation(np.zeros_like(G), T)


def render_observations(character, cameras, poses, deformations=None, seed=0,
                        noise_px=0.0, dropout=0.0, with_masks=True):
    """Project landmarks and render silhouettes for every frame and camera.

    Detections outside the image or behind a camera get confidence 0, as do
    randomly dropped ones.  Returns (ObservationSet, gt_landmarks (F,M,3)).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    skel = character.skeleton
    F, C, M = len(poses), len(cameras), skel.n_landmarks
    det = np.zeros((F, C, M, 2))
    conf = np.zeros((F, C, M))
    masks = None
    if with_masks:
        h, w = cameras[0].height, cameras[0].width
        masks = np.zeros((F, C, h, w), dtype=bool)
    gt_landmarks = np.zeros((F, M, 3))
    for fi, pose in enumerate(poses):
        fk = forward_kinematics(skel, pose.theta, pose.alpha)
        Q = landmark_positions(skel, fk) + pose.trans
        gt_landmarks[fi] = Q
        for c, cam in enumerate(cameras):
            pix, z = cam.project(Q)
            ok = (z > 0) & (pix[:, 0] >= 0) & (pix[:, 0] <= cam.width - 1) \
                & (pix[:, 1] >= 0) & (pix[:, 1] <= cam.height - 1)
            if noise_px > 0:
                pix = pix + rng.normal(0.0, noise_px, (M, 2))
            det[fi, c] = np.where(ok[:, None], pix, 0.0)
            conf[fi, c] = ok.astype(np.float64)
        if dropout > 0:
            drop = rng.random((C, M)) < dropout
            conf[fi][drop] = 0.0
        if with_masks:
            nt = node_skinning(character, fk)
            deformation = (deformations[fi] if deformations is not None
                           else GraphDeformation.identity(character.graph.n_nodes))
            verts = deform_vertices(character, deformation, nt, pose.trans)
            for c, cam in enumerate(cameras):
                masks[fi, c] = render_mask(cam, verts, character.mesh.triangles)
    obs = ObservationSet(detections=det, confidence=conf, masks=masks)
    return obs, gt_landmarks


@dataclass
class SyntheticScene:
    character: object
    info: dict
    cameras: list
    obs: ObservationSet
    gt_landmarks: np.ndarray
    gt_poses: list
    gt_deformations: list = None
    meta: dict = field(default_factory=dict)


def make_scene(kind="pose", seed=0, n_frames=30, n_cameras=8, resolution=256,
               noise_px=0.0, dropout=0.0, deform_magnitude=0.35,
               with_masks=True) -> SyntheticScene:
    """One-stop scene builder; kind is "pose" (rigid surface) or "deform"."""
    if kind not in ("pose", "deform"):
        raise InvalidInputError(f"unknown scene kind '{kind}'")
    character, info = make_capsule_character()
    cameras = make_camera_rig(n_cameras, resolution)
    poses = synth_motion(character.skeleton, n_frames, seed)
    deformations = None
    if kind == "deform":
        d = synth_deformation(character, info, magnitude=deform_magnitude)
        deformations = [d] * n_frames
    obs, gt_landmarks = render_observations(
        character, cameras, poses, deformations, seed=seed + 1,
        noise_px=noise_px, dropout=dropout, with_masks=with_masks)
    meta = {"kind": kind, "seed": seed, "n_frames": n_frames,
            "n_cameras": n_cameras, "resolution": resolution,
            "noise_px": noise_px, "dropout": dropout,
            "deform_magnitude": deform_magnitude if kind == "deform" else 0.0}
    return SyntheticScene(character=character, info=info, cameras=cameras,
                          obs=obs, gt_landmarks=gt_landmarks, gt_poses=poses,
                          gt_deformations=deformations, meta=meta)


def save_scene(scene: SyntheticScene, path):
    """Write the scene as the on-disk layout the CLI consumes."""
    formats.ensure_dir(path)
    save_character(scene.character, os.path.join(path, "character"))
    save_rig(os.path.join(path, "rig.json"), scene.cameras)
    save_observations(os.path.join(path, "obs"), scene.obs)
    gt_dir = os.path.join(path, "gt")
    formats.ensure_dir(gt_dir)
    formats.write_json(os.path.join(gt_dir, "landmarks.json"),
                       {"landmarks": scene.gt_landmarks.tolist()})
    params = {"poses": [{"theta": p.theta.tolist(), "alpha": p.alpha.tolist(),
                         "trans": p.trans.tolist()} for p in scene.gt_poses]}
    if scene.gt_deformations is not None:
        params["deformations"] = [{"A": d.A.tolist(), "T": d.T.tolist()}
                                  for d in scene.gt_deformations]
    formats.write_json(os.path.join(gt_dir, "params.json"), params)
    formats.write_json(os.path.join(path, "meta.json"), scene.meta)


def load_gt(path):
    """Read back ground truth written by save_scene."""
    lm = formats.read_json(os.path.join(path, "gt", "landmarks.json"))
    params = formats.read_json(os.path.join(path, "gt", "params.json"))
    poses = [PoseParams(np.asarray(p["theta"]), np.asarray(p["alpha"]),
                        np.asarray(p["trans"])) for p in params["poses"]]
    deformations = None
    if "deformations" in params:
        deformations = [GraphDeformation(np.asarray(d["A"]), np.asarray(d["T"]))
                        for d in params["deformations"]]
    return {"landmarks": np.asarray(lm["landmarks"]), "poses": poses,
            "deformations": deformations}
