"""Staged per-frame solver: skeletal pose first, then graph deformation.

The pose stage descends on joint angles and root orientation while the
global translation is re-solved in closed form every iteration and chained
into the gradient.  The deformation stage freezes the pose and descends on
the graph warp against silhouette, landmark and rigidity terms.  Both
stages use Adam and return the best iterate seen, not the last one.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import solve_translation, translation_jacobian
from .deform import (GraphDeformation, backprop_landmarks, backprop_vertices,
                     deform_landmarks, deform_vertices)
from .errors import DegenerateGeometryError
from .kinematics import (PoseParams, fk_jacobian, forward_kinematics,
                         landmark_positions, node_skinning)
from .losses import (arap_loss, effective_confidence, keypoint_graph_loss,
                     keypoint_loss, limit_loss, silhouette_loss,
                     silhouette_terms)
from .raster import distance_transform


@dataclass
class SolverConfig:
    pose_iters: int = 200
    pose_lr: float = 1e-2
    deform_iters: int = 300
    deform_lr: float = 1e-3
    w_sil: float = 1000.0
    w_kpg: float = 0.05
    w_arap: float = 1500.0
    conf_floor: float = 0.4
    kp_weight: float = 1.0
    limit_enabled: bool = True
    smooth: bool = True
    smooth_window: int = 5
    smooth_sigma: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class SolveResult:
    params: PoseParams
    trace: list = field(default_factory=list)
    failed: bool = False


@dataclass
class TrackingResult:
    poses: list
    deformations: list = None
    failed: list = None
    pose_traces: list = None
    deform_traces: list = None


class Adam:
    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, x, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return x - self.lr * mh / (np.sqrt(vh) + self.eps)


def lambda_weights(groups, iteration, total):
    """Landmark priority schedule: anchor the torso early, then everything.

    First third: torso x3, elbows/knees x2, rest x1.  After that all x3.
    """
    if iteration < total // 3:
        table = {"torso": 3.0, "elbow_knee": 2.0}
        return np.array([table.get(g, 1.0) for g in groups])
    return np.full(len(groups), 3.0)


def limit_weight(iteration, total):
    """Joint-limit schedule: 1.0, then 0.1, then off, by thirds."""
    if iteration < total // 3:
        return 1.0
    if iteration < (2 * total) // 3:
        return 0.1
    return 0.0


def solve_pose_frame(character, cameras, detections, confidence, config,
                     init: PoseParams, freeze_trans=False) -> SolveResult:
    """Descend on (theta, alpha) with closed-form translation per iterate."""
    skel = character.skeleton
    D = skel.n_dofs
    conf = effective_confidence(confidence, config.conf_floor)
    groups = skel.landmark_groups
    x = np.concatenate([init.theta, init.alpha])
    opt = Adam(len(x), config.pose_lr, config.adam_beta1, config.adam_beta2,
               config.adam_eps)
    total = config.pose_iters
    stable_from = (2 * total) // 3   # objective weights are constant from here
    best_val = np.inf
    best = init.copy()
    trace = []
    for it in range(total + 1):
        theta, alpha = x[:D], x[D:]
        fk = forward_kinematics(skel, theta, alpha)
        P = landmark_positions(skel, fk)
        if freeze_trans:
            t = init.trans
        else:
            try:
                t = solve_translation(P, cameras, detections, conf)
            except DegenerateGeometryError:
                return SolveResult(params=init.copy(), trace=trace, failed=True)
        lam = lambda_weights(groups, it, total)
        v_kp, gQ = keypoint_loss(P + t, cameras, detections, conf, lam)
        v_kp *= config.kp_weight
        gQ *= config.kp_weight
        wlim = limit_weight(it, total) if config.limit_enabled else 0.0
        v_lim, g_lim = limit_loss(theta, skel.theta_min, skel.theta_max)
        value = v_kp + wlim * v_lim
        trace.append((it, v_kp, wlim * v_lim))
        if it >= stable_from and value < best_val:
            best_val = value
            best = PoseParams(theta.copy(), alpha.copy(), np.array(t, dtype=np.float64))
        if it == total:
            break
        gP = gQ
        if not freeze_trans:
            Jt = translation_jacobian(P, cameras, detections, conf)
            gP = gQ + np.einsum("mji,j->mi", Jt, gQ.sum(axis=0))
        Jfk = fk_jacobian(skel, fk, P)
        g = np.einsum("mi,mid->d", gP, Jfk)
        g[:D] += wlim * g_lim
        x = opt.step(x, g)
    return SolveResult(params=best, trace=trace, failed=False)


def solve_deform_frame(character, cameras, detections, confidence, dts, config,
                       pose: PoseParams, init: GraphDeformation = None):
    """Descend on the graph warp with the pose and translation frozen.

    dts holds one observed-silhouette distance image per camera (None for
    views without a mask).
    """
    skel = character.skeleton
    K = character.graph.n_nodes
    conf = effective_confidence(confidence, config.conf_floor)
    fk = forward_kinematics(skel, pose.theta, pose.alpha)
    nt = node_skinning(character, fk)
    tris = character.mesh.triangles
    if init is None:
        init = GraphDeformation.identity(K)
    x = np.concatenate([init.A.ravel(), init.T.ravel()])
    opt = Adam(len(x), config.deform_lr, config.adam_beta1, config.adam_beta2,
               config.adam_eps)
    best_val = np.inf
    best = init.copy()
    trace = []
    for it in range(config.deform_iters + 1):
        deformation = GraphDeformation(x[:3 * K].reshape(K, 3),
                                       x[3 * K:].reshape(K, 3))
        verts = deform_vertices(character, deformation, nt, pose.trans)
        v_sil = 0.0
        gV = np.zeros_like(verts)
        for c, cam in enumerate(cameras):
            if dts[c] is None:
                continue
            terms = silhouette_terms(cam, dts[c], verts, tris)
            v, g = silhouette_loss(cam, dts[c], verts, terms)
            v_sil += v
            gV += g
        lm = deform_landmarks(character, deformation, nt, pose.trans)
        v_kpg, gQ = keypoint_graph_loss(lm, cameras, detections, conf)
        v_arap, gA_arap, gT_arap = arap_loss(character, deformation)
        value = config.w_sil * v_sil + config.w_kpg * v_kpg + config.w_arap * v_arap
        trace.append((it, config.w_sil * v_sil, config.w_kpg * v_kpg,
                      config.w_arap * v_arap))
        if value < best_val:
            best_val = value
            best = deformation.copy()
        if it == config.deform_iters:
            break
        gA, gT = backprop_vertices(character, deformation, nt, config.w_sil * gV)
        gA2, gT2 = backprop_landmarks(character, deformation, nt, config.w_kpg * gQ)
        gA += gA2 + config.w_arap * gA_arap
        gT += gT2 + config.w_arap * gT_arap
        x = opt.step(x, np.concatenate([gA.ravel(), gT.ravel()]))
    return best, trace


def temporal_smooth(values, window=5, sigma=1.0):
    """Gaussian smoothing along the first axis, renormalized at the edges."""
    v = np.asarray(values, dtype=np.float64)
    F = v.shape[0]
    h = window // 2
    offs = np.arange(-h, h + 1)
    w = np.exp(-offs.astype(np.float64) ** 2 / (2.0 * sigma * sigma))
    out = np.zeros_like(v)
    for f in range(F):
        lo = max(0, f - h)
        hi = min(F - 1, f + h)
        sel = w[lo - f + h : hi - f + h + 1]
        out[f] = np.tensordot(sel, v[lo:hi + 1], axes=(0, 0)) / sel.sum()
    return out


def track_sequence(character, cameras, obs, config, init=None) -> TrackingResult:
    """Per-frame staged solve over a sequence with warm starts.

    init may be a single PoseParams (first frame), a list (one per frame),
    or None (zero pose).  Pose results are temporally smoothed before the
    deformation stage; frames whose translation solve degenerates reuse the
    previous frame's pose and are flagged.
    """
    skel = character.skeleton
    F = obs.n_frames
    if init is None:
        inits = [None] * F
        prev = PoseParams(np.zeros(skel.n_dofs), np.zeros(3), np.zeros(3))
    elif isinstance(init, PoseParams):
        inits = [None] * F
        prev = init
    else:
        inits = list(init)
        prev = inits[0]
    poses, failed, pose_traces = [], [], []
    for f in range(F):
        start = inits[f] if inits[f] is not None else prev
        res = solve_pose_frame(character, cameras, obs.detections[f],
                               obs.confidence[f], config, start)
        if res.failed:
            res.params = prev.copy()
        poses.append(res.params)
        failed.append(res.failed)
        pose_traces.append(res.trace)
        prev = res.params
    if config.smooth and F >= 2:
        theta = temporal_smooth(np.stack([p.theta for p in poses]),
                                config.smooth_window, config.smooth_sigma)
        alpha = temporal_smooth(np.stack([p.alpha for p in poses]),
                                config.smooth_window, config.smooth_sigma)
        trans = temporal_smooth(np.stack([p.trans for p in poses]),
                                config.smooth_window, config.smooth_sigma)
        poses = [PoseParams(theta[f], alpha[f], trans[f]) for f in range(F)]
    deformations = None
    deform_traces = None
    if obs.masks is not None:
        deformations, deform_traces = [], []
        prev_def = None
        for f in range(F):
            dts = [distance_transform(obs.masks[f, c])
                   for c in range(obs.n_cameras)]
            deformation, dtrace = solve_deform_frame(
                character, cameras, obs.detections[f], obs.confidence[f],
                dts, config, poses[f], init=prev_def)
            deformations.append(deformation)
            deform_traces.append(dtrace)
            prev_def = deformation
    return TrackingResult(poses=poses, deformations=deformations, failed=failed,
                          pose_traces=pose_traces, deform_traces=deform_traces)


def monocular_refine(character, camera, detections, confidence, mask, config,
                     pose: PoseParams, deformation: GraphDeformation = None):
    """Refine one frame against a single view for overlay quality.

    The keypoint term is reduced to a weak anchor, joint limits are off and
    the translation stays frozen (a single view cannot fix depth); the
    deformation stage then runs with its usual weights against this view's
    silhouette.  Returns (pose, deformation).
    """
    mono = replace(config, kp_weight=1e-6, limit_enabled=False)
    det = np.asarray(detections, dtype=np.float64).reshape(1, -1, 2)
    conf = np.asarray(confidence, dtype=np.float64).reshape(1, -1)
    res = solve_pose_frame(character, [camera], det, conf, mono, pose,
                           freeze_trans=True)
    refined_pose = res.params
    dts = [distance_transform(mask)]
    refined_def, _ = solve_deform_frame(character, [camera], det, conf, dts,
                                        mono, refined_pose, init=deformation)
    return refined_pose, refined_def
