import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from perfcap.deform import GraphDeformation
from perfcap.losses import (ARAP_EPS_SQ, CONF_FLOOR, arap_loss,
                            effective_confidence, keypoint_loss, limit_loss,
                            silhouette_loss, silhouette_terms)
from perfcap.raster import distance_transform, render_mask

from conftest import seeded
from test_camera import random_camera
from test_raster import flat_camera, quad_scene


def test_confidence_floor_zeroes_weak_detections():
    c = np.array([0.0, 0.39, 0.4, 0.41, 1.0])
    out = effective_confidence(c)
    assert np.array_equal(out, [0.0, 0.0, 0.4, 0.41, 1.0])
    assert CONF_FLOOR == 0.4


def test_keypoint_loss_hand_case():
    cam = flat_camera(64)
    # one point at (10,20) depth 1 projects to pixel (10,20)
    P = np.array([[10.0, 20.0, 1.0]])
    det = np.array([[[13.0, 16.0]]])
    conf = np.array([[0.5]])
    lam = np.array([2.0])
    value, grad = keypoint_loss(P, [cam], det, conf, lam)
    # residual (-3, 4), weight 1.0: value = 25
    assert np.isclose(value, 25.0)
    # d pix/d point = [[1,0,-10],[0,1,-20]] at z=1
    expect = 2.0 * 1.0 * (np.array([-3.0, 4.0]) @ np.array([[1, 0, -10], [0, 1, -20.0]]))
    assert np.allclose(grad[0], expect)


def test_keypoint_loss_skips_behind_and_zero_weight():
    cam = flat_camera(64)
    P = np.array([[5.0, 5.0, -1.0], [5.0, 5.0, 1.0]])
    det = np.full((1, 2, 2), 30.0)
    conf = np.array([[1.0, 0.0]])
    value, grad = keypoint_loss(P, [cam], det, conf)
    assert value == 0.0
    assert np.all(grad == 0)


def test_keypoint_loss_sums_over_cameras():
    rng = seeded(60)
    cams = [random_camera(rng) for _ in range(3)]
    P = rng.uniform(-0.3, 0.3, (4, 3))
    det = rng.uniform(0, 100, (3, 4, 2))
    conf = rng.uniform(0.5, 1.0, (3, 4))
    lam = rng.uniform(0.5, 2.0, 4)
    total, _ = keypoint_loss(P, cams, det, conf, lam)
    parts = sum(keypoint_loss(P, [c], det[i:i + 1], conf[i:i + 1], lam)[0]
                for i, c in enumerate(cams))
    assert np.isclose(total, parts)


def test_limit_loss_one_sided():
    lo = np.array([-1.0, -1.0, -1.0])
    hi = np.array([1.0, 1.0, 1.0])
    value, grad = limit_loss(np.array([0.5, 1.5, -2.0]), lo, hi)
    assert np.isclose(value, 0.25 + 1.0)
    assert np.allclose(grad, [0.0, 1.0, -2.0])
    assert limit_loss(np.zeros(3), lo, hi)[0] == 0.0


def quad_view():
    cam = flat_camera()
    verts, tris = quad_scene()
    return cam, verts, tris


def test_silhouette_zero_when_shapes_agree():
    cam, verts, tris = quad_view()
    dt = distance_transform(render_mask(cam, verts, tris))
    terms = silhouette_terms(cam, dt, verts, tris)
    assert terms.valid and len(terms.indices) > 0
    value, grad = silhouette_loss(cam, dt, verts, terms)
    assert value == 0.0
    assert np.all(grad == 0)


def test_silhouette_deadband_swallows_subpixel():
    cam, verts, tris = quad_view()
    # observed quad shifted out by half a pixel: inside the deadband
    obs = verts.copy()
    obs[:, 0] += np.where(verts[:, 0] > 15, 0.5, -0.5)
    dt = distance_transform(render_mask(cam, obs, tris))
    terms = silhouette_terms(cam, dt, verts, tris)
    value, _ = silhouette_loss(cam, dt, verts, terms)
    assert value == 0.0
    # with the deadband off the residuals reappear
    value_raw, _ = silhouette_loss(cam, dt, verts, terms, deadband=0.0)
    assert value_raw >= 0.0


def test_silhouette_pulls_overhang_inward():
    cam, verts, tris = quad_view()
    # probes on the model's right boundary column (corners rint off-mask)
    probes = np.array([[19.0, 12.0, 1.0], [19.0, 15.0, 1.0], [19.0, 18.0, 1.0]])
    verts = np.concatenate([verts, probes])
    # observed silhouette is a narrower quad: model pokes out ~5 px on +x
    obs = verts.copy()
    obs[[1, 2], 0] = 15.0
    dt = distance_transform(render_mask(cam, obs, tris))
    terms = silhouette_terms(cam, dt, verts, tris)
    value, grad = silhouette_loss(cam, dt, verts, terms)
    # each probe sits 5 px out; the deadband leaves a 4 px residual
    assert np.isclose(value, 3 * 16.0)
    pulled = np.nonzero(np.abs(grad).sum(axis=1))[0]
    assert set(pulled) == {4, 5, 6}
    # descent pushes the overhang toward -x (gradient points +x)
    assert np.all(grad[pulled, 0] > 0)


def test_silhouette_invalid_on_empty_mask():
    cam, verts, tris = quad_view()
    dt = distance_transform(np.zeros((32, 32), dtype=bool))
    terms = silhouette_terms(cam, dt, verts, tris)
    assert not terms.valid
    value, grad = silhouette_loss(cam, dt, verts, terms)
    assert value == 0.0 and np.all(grad == 0)


def test_arap_zero_under_rigid_motion(capsule):
    character, _ = capsule
    K = character.graph.n_nodes
    ang = np.array([0.4, -0.7, 0.2])
    d = GraphDeformation(np.tile(ang, (K, 1)), np.zeros((K, 3)))
    R = Rotation.from_euler("XYZ", ang).as_matrix()
    G = character.graph.node_positions
    d.T[:] = (G @ R.T) - G + np.array([0.3, -0.1, 0.5])
    value, gA, gT = arap_loss(character, d)
    assert abs(value) < 1e-9
    assert arap_loss(character, GraphDeformation.identity(K))[0] == 0.0


def test_arap_penalizes_stretch_by_rigidity(capsule):
    character, _ = capsule
    g = character.graph
    K = g.n_nodes
    edges, u = g.edge_arrays()
    k, l = edges[0]
    d = GraphDeformation.identity(K)
    d.T[l] += [0.0, 0.1, 0.0]
    value, _, _ = arap_loss(character, d)
    assert value > 0
    # the smooth-L1 of a 0.1 m deviation on both directed copies of (k,l),
    # plus every other edge at l, all weighted by rigidity
    touching = [(a, b, w) for (a, b), w in zip(edges, u) if l in (a, b)]
    expect = sum(2 * w * (np.sqrt(0.01 + ARAP_EPS_SQ) - np.sqrt(ARAP_EPS_SQ))
                 for _, _, w in touching)
    assert np.isclose(value, expect, rtol=1e-6)


def test_arap_gradient_finite_difference(capsule):
    character, _ = capsule
    rng = seeded(61)
    K = character.graph.n_nodes
    d = GraphDeformation(rng.uniform(-0.2, 0.2, (K, 3)),
                         rng.uniform(-0.05, 0.05, (K, 3)))
    value, gA, gT = arap_loss(character, d)
    h = 1e-6
    for k in rng.choice(K, 4, replace=False):
        for j in range(3):
            for which in ("A", "T"):
                dp, dm = d.copy(), d.copy()
                getattr(dp, which)[k, j] += h
                getattr(dm, which)[k, j] -= h
                fd = (arap_loss(character, dp)[0] - arap_loss(character, dm)[0]) / (2 * h)
                g = gA if which == "A" else gT
                assert np.isclose(g[k, j], fd, atol=1e-5)
