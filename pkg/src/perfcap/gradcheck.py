"""Finite-difference verification of every analytic gradient in the engine.

Each check builds a random instance from a seed, compares the analytic
gradient against central differences on a handful of randomly chosen
coordinates, and reports the worst relative error.  The image-domain
silhouette check freezes the discrete boundary structure (as the solver
does within an iteration) and gets a looser tolerance.

Shared by the test suite and the `perfcap gradcheck` command.
"""

from dataclasses import dataclass

import numpy as np

from .alignment import solve_translation, translation_jacobian
from .deform import (GraphDeformation, backprop_landmarks, backprop_vertices,
                     deform_landmarks, deform_vertices)
from .kinematics import (fk_jacobian, forward_kinematics, landmark_positions,
                         node_skinning)
from .losses import (arap_loss, keypoint_loss, limit_loss, silhouette_loss,
                     silhouette_terms)
from .raster import distance_transform, render_mask, sample_dt
from .synthetic import make_camera_rig, make_capsule_character

DEFAULT_TOL = 1e-4
SIL_TOL = 1e-3

_fixture_cache = {}


def _fixture():
    if "character" not in _fixture_cache:
        character, info = make_capsule_character()
        _fixture_cache["character"] = character
        _fixture_cache["info"] = info
        _fixture_cache["cameras"] = make_camera_rig(4, 128)
    return (_fixture_cache["character"], _fixture_cache["info"],
            _fixture_cache["cameras"])


@dataclass
class CheckResult:
    name: str
    rel_err: float
    tol: float

    @property
    def ok(self):
        return self.rel_err < self.tol


def _rel(fd, an):
    fd = np.asarray(fd, dtype=np.float64).ravel()
    an = np.asarray(an, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-8)
    return float(np.linalg.norm(fd - an) / scale)


def _random_pose(rng, skeleton, scale=0.8):
    theta = rng.uniform(scale * skeleton.theta_min, scale * skeleton.theta_max)
    alpha = rng.uniform(-0.4, 0.4, 3)
    return theta, alpha


def check_fk_jacobian(seed, h=1e-6):
    character, _, _ = _fixture()
    skel = character.skeleton
    rng = np.random.Generator(np.random.PCG64(seed))
    theta, alpha = _random_pose(rng, skel)
    x = np.concatenate([theta, alpha])
    D = skel.n_dofs
    fk = forward_kinematics(skel, theta, alpha)
    J = fk_jacobian(skel, fk, landmark_positions(skel, fk))
    worst = 0.0
    for d in rng.choice(D + 3, size=6, replace=False):
        xp, xm = x.copy(), x.copy()
        xp[d] += h
        xm[d] -= h
        Pp = landmark_positions(skel, forward_kinematics(skel, xp[:D], xp[D:]))
        Pm = landmark_positions(skel, forward_kinematics(skel, xm[:D], xm[D:]))
        worst = max(worst, _rel((Pp - Pm) / (2 * h), J[:, :, d]))
    return CheckResult("fk_jacobian", worst, DEFAULT_TOL)


def _random_ray_problem(rng, cameras, M=21):
    P = rng.normal(0.0, 0.4, (M, 3))
    C = len(cameras)
    det = np.zeros((C, M, 2))
    for c, cam in enumerate(cameras):
        pix, _ = cam.project(P + rng.normal(0, 0.01, (M, 3)))
        det[c] = pix
    conf = rng.uniform(0.5, 1.0, (C, M))
    return P, det, conf


def check_translation_jacobian(seed, h=1e-6):
    _, _, cameras = _fixture()
    rng = np.random.Generator(np.random.PCG64(seed))
    P, det, conf = _random_ray_problem(rng, cameras)
    Jt = translation_jacobian(P, cameras, det, conf)
    worst = 0.0
    for _ in range(6):
        m = int(rng.integers(len(P)))
        j = int(rng.integers(3))
        Pp, Pm = P.copy(), P.copy()
        Pp[m, j] += h
        Pm[m, j] -= h
        tp = solve_translation(Pp, cameras, det, conf)
        tm = solve_translation(Pm, cameras, det, conf)
        worst = max(worst, _rel((tp - tm) / (2 * h), Jt[m, :, j]))
    return CheckResult("translation_jacobian", worst, DEFAULT_TOL)


def check_pose_objective(seed, h=1e-6):
    """Total pose-stage keypoint gradient, including the closed-form
    translation chained through its Jacobian."""
    character, _, cameras = _fixture()
    skel = character.skeleton
    rng = np.random.Generator(np.random.PCG64(seed))
    theta, alpha = _random_pose(rng, skel, scale=0.5)
    fk0 = forward_kinematics(skel, theta, alpha)
    gt_land = landmark_positions(skel, fk0)
    C, M = len(cameras), skel.n_landmarks
    det = np.zeros((C, M, 2))
    for c, cam in enumerate(cameras):
        pix, _ = cam.project(gt_land + rng.normal(0, 0.05, (M, 3)))
        det[c] = pix
    conf = rng.uniform(0.5, 1.0, (C, M))
    lam = rng.uniform(1.0, 3.0, M)
    D = skel.n_dofs

    def objective(x):
        fk = forward_kinematics(skel, x[:D], x[D:])
        P = landmark_positions(skel, fk)
        t = solve_translation(P, cameras, det, conf)
        return keypoint_loss(P + t, cameras, det, conf, lam)[0]

    x = np.concatenate([theta, alpha]) + rng.normal(0, 0.1, D + 3)
    fk = forward_kinematics(skel, x[:D], x[D:])
    P = landmark_positions(skel, fk)
    t = solve_translation(P, cameras, det, conf)
    _, gQ = keypoint_loss(P + t, cameras, det, conf, lam)
    Jt = translation_jacobian(P, cameras, det, conf)
    gP = gQ + np.einsum("mji,j->mi", Jt, gQ.sum(axis=0))
    g = np.einsum("mi,mid->d", gP, fk_jacobian(skel, fk, P))
    worst = 0.0
    for d in rng.choice(D + 3, size=6, replace=False):
        xp, xm = x.copy(), x.copy()
        xp[d] += h
        xm[d] -= h
        worst = max(worst, _rel((objective(xp) - objective(xm)) / (2 * h), g[d]))
    return CheckResult("pose_objective", worst, DEFAULT_TOL)


def check_keypoint(seed, h=1e-6):
    """Keypoint reprojection gradient against the world points."""
    character, _, cameras = _fixture()
    skel = character.skeleton
    rng = np.random.Generator(np.random.PCG64(seed))
    theta, alpha = _random_pose(rng, skel, scale=0.5)
    P = landmark_positions(skel, forward_kinematics(skel, theta, alpha))
    C, M = len(cameras), skel.n_landmarks
    det = rng.uniform(20, 100, (C, M, 2))
    conf = rng.uniform(0.0, 1.0, (C, M))
    conf = np.where(conf >= 0.4, conf, 0.0)
    lam = rng.uniform(1.0, 3.0, M)
    _, g = keypoint_loss(P, cameras, det, conf, lam)
    worst = 0.0
    for _ in range(6):
        m = int(rng.integers(M))
        j = int(rng.integers(3))
        Pp, Pm = P.copy(), P.copy()
        Pp[m, j] += h
        Pm[m, j] -= h
        fd = (keypoint_loss(Pp, cameras, det, conf, lam)[0]
              - keypoint_loss(Pm, cameras, det, conf, lam)[0]) / (2 * h)
        worst = max(worst, _rel(fd, g[m, j]))
    return CheckResult("keypoint_loss", worst, DEFAULT_TOL)


def check_limit(seed, h=1e-6):
    character, _, _ = _fixture()
    skel = character.skeleton
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = rng.uniform(skel.theta_min - 0.5, skel.theta_max + 0.5)
    _, g = limit_loss(theta, skel.theta_min, skel.theta_max)
    worst = 0.0
    for d in rng.choice(skel.n_dofs, size=6, replace=False):
        tp, tm = theta.copy(), theta.copy()
        tp[d] += h
        tm[d] -= h
        fd = (limit_loss(tp, skel.theta_min, skel.theta_max)[0]
              - limit_loss(tm, skel.theta_min, skel.theta_max)[0]) / (2 * h)
        worst = max(worst, _rel(fd, g[d]))
    return CheckResult("limit_loss", worst, DEFAULT_TOL)


def _random_deformation(rng, K, scale=0.15):
    return GraphDeformation(rng.normal(0, scale, (K, 3)),
                            rng.normal(0, scale * 0.3, (K, 3)))


def check_arap(seed, h=1e-6):
    character, _, _ = _fixture()
    rng = np.random.Generator(np.random.PCG64(seed))
    K = character.graph.n_nodes
    deformation = _random_deformation(rng, K)
    _, gA, gT = arap_loss(character, deformation)
    g = np.concatenate([gA.ravel(), gT.ravel()])
    worst = 0.0
    for idx in rng.choice(6 * K, size=6, replace=False):
        xp = np.concatenate([deformation.A.ravel(), deformation.T.ravel()])
        xm = xp.copy()
        xp[idx] += h
        xm[idx] -= h
        dp = GraphDeformation(xp[:3 * K].reshape(K, 3), xp[3 * K:].reshape(K, 3))
        dm = GraphDeformation(xm[:3 * K].reshape(K, 3), xm[3 * K:].reshape(K, 3))
        fd = (arap_loss(character, dp)[0] - arap_loss(character, dm)[0]) / (2 * h)
        worst = max(worst, _rel(fd, g[idx]))
    return CheckResult("arap_loss", worst, DEFAULT_TOL)


def _node_transforms(rng, character):
    skel = character.skeleton
    theta, alpha = _random_pose(rng, skel, scale=0.4)
    fk = forward_kinematics(skel, theta, alpha)
    return node_skinning(character, fk)


def check_deform_vertices_backprop(seed, h=1e-6):
    character, _, _ = _fixture()
    rng = np.random.Generator(np.random.PCG64(seed))
    K = character.graph.n_nodes
    nt = _node_transforms(rng, character)
    deformation = _random_deformation(rng, K)
    probe = rng.normal(0, 1, (character.mesh.n_vertices, 3))

    def objective(d):
        return float(np.sum(probe * deform_vertices(character, d, nt)))

    gA, gT = backprop_vertices(character, deformation, nt, probe)
    g = np.concatenate([gA.ravel(), gT.ravel()])
    worst = 0.0
    for idx in rng.choice(6 * K, size=6, replace=False):
        xp = np.concatenate([deformation.A.ravel(), deformation.T.ravel()])
        xm = xp.copy()
        xp[idx] += h
        xm[idx] -= h
        dp = GraphDeformation(xp[:3 * K].reshape(K, 3), xp[3 * K:].reshape(K, 3))
        dm = GraphDeformation(xm[:3 * K].reshape(K, 3), xm[3 * K:].reshape(K, 3))
        fd = (objective(dp) - objective(dm)) / (2 * h)
        worst = max(worst, _rel(fd, g[idx]))
    return CheckResult("deform_vertices_backprop", worst, DEFAULT_TOL)


def check_deform_landmarks_backprop(seed, h=1e-6):
    character, _, _ = _fixture()
    rng = np.random.Generator(np.random.PCG64(seed))
    K = character.graph.n_nodes
    nt = _node_transforms(rng, character)
    deformation = _random_deformation(rng, K)
    probe = rng.normal(0, 1, (character.skeleton.n_landmarks, 3))

    def objective(d):
        return float(np.sum(probe * deform_landmarks(character, d, nt)))

    gA, gT = backprop_landmarks(character, deformation, nt, probe)
    g = np.concatenate([gA.ravel(), gT.ravel()])
    worst = 0.0
    for idx in rng.choice(6 * K, size=6, replace=False):
        xp = np.concatenate([deformation.A.ravel(), deformation.T.ravel()])
        xm = xp.copy()
        xp[idx] += h
        xm[idx] -= h
        dp = GraphDeformation(xp[:3 * K].reshape(K, 3), xp[3 * K:].reshape(K, 3))
        dm = GraphDeformation(xm[:3 * K].reshape(K, 3), xm[3 * K:].reshape(K, 3))
        fd = (objective(dp) - objective(dm)) / (2 * h)
        worst = max(worst, _rel(fd, g[idx]))
    return CheckResult("deform_landmarks_backprop", worst, DEFAULT_TOL)


def check_dt_sample(seed, h=1e-4):
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = rng.random((32, 32)) < 0.1
    mask[16, 16] = True
    dt = distance_transform(mask)
    pts = rng.integers(1, 30, (8, 2)).astype(np.float64) \
        + rng.uniform(0.2, 0.8, (8, 2))
    _, grads = sample_dt(dt, pts)
    worst = 0.0
    for i in range(len(pts)):
        for j in range(2):
            pp, pm = pts[i].copy(), pts[i].copy()
            pp[j] += h
            pm[j] -= h
            fd = (sample_dt(dt, pp[None])[0][0]
                  - sample_dt(dt, pm[None])[0][0]) / (2 * h)
            worst = max(worst, _rel(fd, grads[i, j]))
    return CheckResult("dt_sample", worst, DEFAULT_TOL)


def check_silhouette(seed, h=1e-5):
    """Silhouette gradient with the boundary structure frozen."""
    character, info, cameras = _fixture()
    rng = np.random.Generator(np.random.PCG64(seed))
    cam = cameras[int(rng.integers(len(cameras)))]
    K = character.graph.n_nodes
    nt = _node_transforms(rng, character)
    tris = character.mesh.triangles
    # observed silhouette: the same pose with a small extra warp
    d_obs = _random_deformation(rng, K, scale=0.05)
    obs_mask = render_mask(cam, deform_vertices(character, d_obs, nt), tris)
    dt = distance_transform(obs_mask)
    verts = deform_vertices(character, GraphDeformation.identity(K), nt)
    terms = silhouette_terms(cam, dt, verts, tris)
    # deadband off so sub-pixel distances still exercise the chain
    value, grad = silhouette_loss(cam, dt, verts, terms, deadband=0.0)
    if len(terms.indices) == 0:
        return CheckResult("silhouette_loss", 0.0, SIL_TOL)
    worst = 0.0
    picks = rng.choice(len(terms.indices), size=min(6, len(terms.indices)),
                       replace=False)
    for b in picks:
        i = int(terms.indices[b])
        j = int(rng.integers(3))
        vp, vm = verts.copy(), verts.copy()
        vp[i, j] += h
        vm[i, j] -= h
        fd = (silhouette_loss(cam, dt, vp, terms, deadband=0.0)[0]
              - silhouette_loss(cam, dt, vm, terms, deadband=0.0)[0]) / (2 * h)
        worst = max(worst, _rel(fd, grad[i, j]))
    return CheckResult("silhouette_loss", worst, SIL_TOL)


ALL_CHECKS = [
    check_fk_jacobian,
    check_translation_jacobian,
    check_pose_objective,
    check_keypoint,
    check_limit,
    check_arap,
    check_deform_vertices_backprop,
    check_deform_landmarks_backprop,
    check_dt_sample,
    check_silhouette,
]


def run_suite(n_seeds=50, checks=None, base_seed=0):
    """Worst relative error per check over n_seeds random instances."""
    checks = ALL_CHECKS if checks is None else checks
    results = []
    for fn in checks:
        worst = None
        for s in range(n_seeds):
            r = fn(base_seed + s)
            if worst is None or r.rel_err > worst.rel_err:
                worst = r
        results.append(worst)
    return results
