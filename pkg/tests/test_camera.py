import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from perfcap.camera import (Camera, ObservationSet, load_observations,
                            load_rig, save_observations, save_rig)
from perfcap.errors import CalibrationError, InvalidInputError, LoadError

from conftest import seeded


def random_camera(rng, width=128, height=96):
    K = np.array([[rng.uniform(80, 200), 0, width / 2],
                  [0, rng.uniform(80, 200), height / 2],
                  [0, 0, 1]])
    R = Rotation.random(random_state=int(rng.integers(1 << 30))).as_matrix()
    t = rng.uniform(-1, 1, 3) + [0, 0, 4]
    return Camera(K=K, R=R, t=t, width=width, height=height)


def test_validation_rejects_bad_inputs():
    K = np.diag([100.0, 100.0, 1.0])
    with pytest.raises(CalibrationError):
        Camera(K=np.diag([-1.0, 100.0, 1.0]), R=np.eye(3), t=np.zeros(3),
               width=64, height=64)
    with pytest.raises(CalibrationError):
        Camera(K=K, R=2 * np.eye(3), t=np.zeros(3), width=64, height=64)
    with pytest.raises(CalibrationError):
        Camera(K=K, R=np.eye(3), t=np.zeros(3), width=0, height=64)


def test_project_matches_manual_pinhole():
    rng = seeded(10)
    for _ in range(10):
        cam = random_camera(rng)
        X = rng.uniform(-0.5, 0.5, (7, 3))
        pix, z = cam.project(X)
        for i in range(len(X)):
            pc = cam.R @ X[i] + cam.t
            assert np.isclose(z[i], pc[2])
            h = cam.K @ pc
            assert np.allclose(pix[i], h[:2] / h[2], atol=1e-10)


def test_behind_camera_gets_nan_pixels():
    cam = Camera(K=np.diag([100.0, 100.0, 1.0]), R=np.eye(3),
                 t=np.zeros(3), width=64, height=64)
    pix, z = cam.project([[0, 0, -1.0], [0, 0, 2.0]])
    assert np.all(np.isnan(pix[0]))
    assert z[0] == -1.0
    assert np.all(np.isfinite(pix[1]))


def test_projection_jacobian_finite_difference():
    rng = seeded(11)
    cam = random_camera(rng)
    X = rng.uniform(-0.5, 0.5, (5, 3))
    pix, z, J = cam.project_with_jacobian(X)
    h = 1e-6
    for i in range(len(X)):
        for a in range(3):
            Xp, Xm = X[i].copy(), X[i].copy()
            Xp[a] += h
            Xm[a] -= h
            pp, _ = cam.project(Xp[None])
            pm, _ = cam.project(Xm[None])
            assert np.allclose(J[i, :, a], (pp[0] - pm[0]) / (2 * h), atol=1e-5)


def test_pixel_ray_round_trip():
    rng = seeded(12)
    cam = random_camera(rng)
    X = rng.uniform(-0.5, 0.5, (6, 3))
    pix, z = cam.project(X)
    for i in range(len(X)):
        o, d = cam.pixel_ray(pix[i])
        # the original point lies on the ray
        v = X[i] - o
        assert np.allclose(np.cross(v, d), 0.0, atol=1e-9)
        assert v @ d > 0


def test_center_maps_to_origin():
    rng = seeded(13)
    cam = random_camera(rng)
    assert np.allclose(cam.to_camera(cam.center[None])[0], 0.0, atol=1e-12)


def test_rig_round_trip(tmp_path):
    rng = seeded(14)
    cams = [random_camera(rng) for _ in range(3)]
    p = tmp_path / "rig.json"
    save_rig(p, cams)
    loaded = load_rig(p)
    assert len(loaded) == 3
    for a, b in zip(cams, loaded):
        assert np.array_equal(a.K, b.K)
        assert np.array_equal(a.R, b.R)
        assert np.array_equal(a.t, b.t)
        assert (a.width, a.height) == (b.width, b.height)


def test_rig_load_rejects_missing_fields(tmp_path):
    p = tmp_path / "rig.json"
    p.write_text('{"cameras": [{"K": [[1,0,0],[0,1,0],[0,0,1]]}]}')
    with pytest.raises(LoadError):
        load_rig(p)


def test_observation_validation():
    det = np.zeros((2, 3, 4, 2))
    conf = np.zeros((2, 3, 4))
    ObservationSet(detections=det, confidence=conf)
    with pytest.raises(InvalidInputError):
        ObservationSet(detections=det, confidence=np.zeros((2, 3)))
    with pytest.raises(InvalidInputError):
        ObservationSet(detections=det, confidence=conf + 1.5)
    with pytest.raises(InvalidInputError):
        ObservationSet(detections=det, confidence=conf,
                       masks=np.zeros((3, 3, 8, 8), dtype=bool))


def test_observations_round_trip_with_masks(tmp_path):
    rng = seeded(15)
    det = rng.uniform(0, 64, (2, 2, 5, 2))
    conf = rng.uniform(0, 1, (2, 2, 5))
    masks = rng.random((2, 2, 16, 12)) > 0.5
    obs = ObservationSet(detections=det, confidence=conf, masks=masks)
    save_observations(tmp_path / "obs", obs)
    back = load_observations(tmp_path / "obs")
    assert np.array_equal(back.detections, det)
    assert np.array_equal(back.confidence, conf)
    assert np.array_equal(back.masks, masks)


def test_observations_round_trip_without_masks(tmp_path):
    obs = ObservationSet(detections=np.ones((1, 2, 3, 2)),
                         confidence=np.ones((1, 2, 3)))
    save_observations(tmp_path / "obs", obs)
    assert load_observations(tmp_path / "obs").masks is None
