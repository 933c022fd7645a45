import numpy as np
import pytest

from perfcap.alignment import (solve_translation, translation_energy,
                               translation_jacobian)
from perfcap.errors import DegenerateGeometryError

from conftest import seeded
from test_camera import random_camera


def lstsq_oracle(points, cameras, detections, confidence):
    """Stack sqrt(sigma) (I - d d^T) rows and solve the tall system directly."""
    rows, rhs = [], []
    eye = np.eye(3)
    for c, cam in enumerate(cameras):
        for m in range(len(points)):
            s = confidence[c, m]
            if s <= 0:
                continue
            h = np.array([detections[c, m, 0], detections[c, m, 1], 1.0])
            d = cam.R.T @ np.linalg.solve(cam.K, h)
            d /= np.linalg.norm(d)
            proj = eye - np.outer(d, d)
            rows.append(np.sqrt(s) * proj)
            rhs.append(np.sqrt(s) * proj @ (cam.center - points[m]))
    A = np.concatenate(rows)
    b = np.concatenate(rhs)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def random_instance(rng, n_cams=4, M=8):
    cams = [random_camera(rng) for _ in range(n_cams)]
    points = rng.uniform(-0.4, 0.4, (M, 3))
    det = np.zeros((n_cams, M, 2))
    for c, cam in enumerate(cams):
        pix, _ = cam.project(points + rng.uniform(-0.2, 0.2, 3))
        det[c] = pix + rng.normal(0, 2.0, (M, 2))
    conf = rng.uniform(0.1, 1.0, (n_cams, M))
    conf[rng.random((n_cams, M)) < 0.2] = 0.0
    return points, cams, det, conf


def test_matches_least_squares_oracle():
    rng = seeded(20)
    for _ in range(100):
        points, cams, det, conf = random_instance(rng)
        t = solve_translation(points, cams, det, conf)
        t_ref = lstsq_oracle(points, cams, det, conf)
        assert np.max(np.abs(t - t_ref)) < 1e-8


def test_residual_gradient_vanishes_at_optimum():
    rng = seeded(21)
    for _ in range(100):
        points, cams, det, conf = random_instance(rng)
        t = solve_translation(points, cams, det, conf)
        _, g = translation_energy(points, t, cams, det, conf)
        assert np.max(np.abs(g)) < 1e-8


def test_energy_gradient_finite_difference():
    rng = seeded(22)
    points, cams, det, conf = random_instance(rng)
    t = rng.uniform(-0.1, 0.1, 3)
    _, g = translation_energy(points, t, cams, det, conf)
    h = 1e-6
    for a in range(3):
        tp, tm = t.copy(), t.copy()
        tp[a] += h
        tm[a] -= h
        Ep, _ = translation_energy(points, tp, cams, det, conf)
        Em, _ = translation_energy(points, tm, cams, det, conf)
        assert np.isclose(g[a], (Ep - Em) / (2 * h), atol=1e-6)


def test_jacobian_finite_difference():
    rng = seeded(23)
    points, cams, det, conf = random_instance(rng)
    J = translation_jacobian(points, cams, det, conf)
    h = 1e-6
    for m in (0, 3, 7):
        for a in range(3):
            Pp, Pm = points.copy(), points.copy()
            Pp[m, a] += h
            Pm[m, a] -= h
            tp = solve_translation(Pp, cams, det, conf)
            tm = solve_translation(Pm, cams, det, conf)
            assert np.allclose(J[m, :, a], (tp - tm) / (2 * h), atol=1e-6)


def test_zero_confidence_detections_drop_out():
    rng = seeded(24)
    points, cams, det, conf = random_instance(rng)
    det2 = det.copy()
    det2[conf == 0] = np.nan
    t = solve_translation(points, cams, det, conf)
    t2 = solve_translation(points, cams, det2, conf)
    assert np.array_equal(t, t2)


def test_single_camera_is_degenerate():
    rng = seeded(25)
    cam = random_camera(rng)
    points = np.zeros((1, 3))
    det = np.array([[[64.0, 48.0]]])
    conf = np.ones((1, 1))
    with pytest.raises(DegenerateGeometryError):
        solve_translation(points, [cam], det, conf)


def test_all_zero_confidence_is_degenerate():
    rng = seeded(26)
    points, cams, det, conf = random_instance(rng)
    with pytest.raises(DegenerateGeometryError):
        solve_translation(points, cams, det, np.zeros_like(conf))
