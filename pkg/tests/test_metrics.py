import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from perfcap.kinematics import PoseParams, forward_kinematics, landmark_positions
from perfcap.metrics import (auc, eval_subset, gle, landmark_report, mask_iou,
                             mpjpe_procrustes, pck3d, procrustes_align,
                             render_ious)
from perfcap.synthetic import make_camera_rig, render_observations

from conftest import seeded


def test_gle_hand_case():
    pred = np.zeros((1, 2, 3))
    gt = np.zeros((1, 2, 3))
    gt[0, 0] = [0.003, 0.004, 0.0]   # 5 mm
    gt[0, 1] = [0.0, 0.0, 0.015]     # 15 mm
    assert np.isclose(gle(pred, gt), 10.0)


def test_pck_threshold_is_inclusive():
    pred = np.zeros((1, 14, 3))
    gt = np.zeros((1, 14, 3))
    gt[0, 0, 0] = 0.150    # exactly 150 mm: counts
    root = np.zeros((1, 3))
    assert pck3d(pred, gt, root, root) == 100.0
    gt[0, 0, 0] = 0.200    # one of 14 beyond threshold
    assert np.isclose(pck3d(pred, gt, root, root), 100.0 * 13 / 14)


def test_pck_is_root_relative():
    pred = np.zeros((1, 3, 3))
    gt = np.full((1, 3, 3), 10.0)    # huge global offset
    pred_root = np.zeros((1, 3))
    gt_root = np.full((1, 3), 10.0)  # same offset on the root
    assert pck3d(pred, gt, pred_root, gt_root) == 100.0


def test_auc_all_at_threshold_edge():
    # every landmark exactly at 150 mm passes only the last of 31 thresholds
    pred = np.zeros((1, 4, 3))
    gt = np.zeros((1, 4, 3))
    gt[:, :, 0] = 0.150
    root = np.zeros((1, 3))
    assert np.isclose(auc(pred, gt, root, root), 100.0 / 31)
    # perfect landmarks pass all thresholds including 0
    assert auc(pred, pred, root, root) == 100.0


def test_procrustes_recovers_similarity():
    rng = seeded(80)
    for _ in range(20):
        X = rng.normal(0, 1, (12, 3))
        s_true = rng.uniform(0.5, 2.0)
        R_true = Rotation.random(random_state=int(rng.integers(1 << 30))).as_matrix()
        t_true = rng.uniform(-2, 2, 3)
        Y = s_true * X @ R_true.T + t_true
        s, R, t = procrustes_align(X, Y)
        assert np.isclose(s, s_true, atol=1e-9)
        assert np.allclose(R, R_true, atol=1e-9)
        assert np.allclose(t, t_true, atol=1e-9)
        assert mpjpe_procrustes(X[None], Y[None]) < 1e-6


def test_procrustes_never_reflects():
    rng = seeded(81)
    X = rng.normal(0, 1, (10, 3))
    Y = X.copy()
    Y[:, 2] *= -1.0   # mirrored target
    s, R, t = procrustes_align(X, Y)
    assert np.isclose(np.linalg.det(R), 1.0, atol=1e-9)


def test_mpjpe_removes_global_misalignment_only():
    rng = seeded(82)
    X = rng.normal(0, 1, (1, 8, 3))
    # bend one landmark: alignment cannot hide a local error
    Y = X.copy()
    Y[0, 3] += [0.05, 0, 0]
    assert mpjpe_procrustes(X, Y) > 1.0
    assert gle(X, Y) > 1.0


def test_mask_iou_cases():
    a = np.zeros((4, 4), dtype=bool)
    b = np.zeros((4, 4), dtype=bool)
    assert mask_iou(a, b) == 1.0    # both empty: agreement
    a[1, 1] = True
    assert mask_iou(a, b) == 0.0
    b[1, 1] = True
    b[2, 2] = True
    assert np.isclose(mask_iou(a, b), 0.5)


def test_eval_subset_names_resolve(character):
    sub, root = eval_subset(character.skeleton)
    assert len(sub) == len(character.skeleton.eval_landmarks)
    assert root not in ()   # resolves without raising


def test_landmark_report_perfect_prediction(character):
    skel = character.skeleton
    rng = seeded(83)
    F, M = 3, skel.n_landmarks
    gt = rng.normal(0, 0.5, (F, M, 3))
    rep = landmark_report(skel, gt, gt)
    assert rep.gle_mm == 0.0
    assert rep.pck150 == 100.0
    assert rep.auc_0_150 == 100.0
    assert rep.mpjpe_mm < 1e-9
    assert len(rep.lines()) == 4
    d = rep.to_dict()
    assert set(d) == {"gle_mm", "pck150", "auc_0_150", "mpjpe_mm"}


def test_render_ious_on_ground_truth(capsule):
    character, _ = capsule
    cameras = make_camera_rig(3, 96)
    rng = seeded(84)
    skel = character.skeleton
    pose = PoseParams(rng.uniform(-0.2, 0.2, skel.n_dofs),
                      rng.uniform(-0.2, 0.2, 3), np.zeros(3))
    obs, _ = render_observations(character, cameras, [pose])
    iou = render_ious(character, cameras, [pose], None, obs.masks)
    assert iou.shape == (1, 3)
    assert np.all(iou == 1.0)   # same renderer, same pose
    # a wrong translation destroys the overlap; override restores it
    shifted = PoseParams(pose.theta, pose.alpha, pose.trans + [0.5, 0, 0])
    low = render_ious(character, cameras, [shifted], None, obs.masks)
    assert low.mean() < 0.6
    fixed = render_ious(character, cameras, [shifted], None, obs.masks,
                        override_trans=[pose.trans])
    assert np.all(fixed == 1.0)
