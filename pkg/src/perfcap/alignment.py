"""Closed-form global translation from multi-view landmark rays.

Each detection pins the corresponding world landmark to the camera ray
through its pixel; the energy is the confidence-weighted squared distance
of Q_m = P_m + t from every ray.  That energy is a quadratic in t, so the
optimum is one 3x3 solve.  Because t is eliminated exactly, its dependence
on the character-frame points P feeds the pose Jacobian through
translation_jacobian.
"""

import numpy as np

from .errors import DegenerateGeometryError

_COND_EPS = 1e-10


def _ray_terms(cameras, detections, confidence):
    """Per camera: (origin, unit ray dirs (M,3), sigma (M,)); sigma=0 rows
    carry a zero direction so NaN detections never propagate."""
    detections = np.asarray(detections, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    out = []
    for c, cam in enumerate(cameras):
        sigma = confidence[c].copy()
        M = len(sigma)
        dirs = np.zeros((M, 3))
        live = sigma > 0
        if live.any():
            pix = detections[c][live]
            h = np.concatenate([pix, np.ones((len(pix), 1))], axis=1)
            d = (np.linalg.solve(cam.K, h.T).T) @ cam.R
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            dirs[live] = d
        out.append((cam.center, dirs, sigma))
    return out


def _normal_system(points, terms):
    """W = sum sigma (I - d d^T) and b = sum sigma (I - d d^T)(o - P)."""
    P = np.asarray(points, dtype=np.float64)
    W = np.zeros((3, 3))
    b = np.zeros(3)
    eye = np.eye(3)
    for o, dirs, sigma in terms:
        proj = eye[None] - dirs[:, :, None] * dirs[:, None, :]   # (M,3,3)
        sw = sigma[:, None, None] * proj
        W += sw.sum(axis=0)
        b += np.einsum("mij,mj->i", sw, o[None] - P)
    return W, b


def _check_conditioning(W):
    ev = np.linalg.eigvalsh(W)
    if ev[0] <= _COND_EPS * max(1.0, ev[-1]):
        raise DegenerateGeometryError(
            "translation system is rank deficient (rays nearly parallel or all weights zero)")


def solve_translation(points, cameras, detections, confidence) -> np.ndarray:
    """Optimal world translation for character-frame landmarks (M,3).

    detections (C,M,2), confidence (C,M); zero-confidence entries drop out.
    """
    terms = _ray_terms(cameras, detections, confidence)
    W, b = _normal_system(points, terms)
    _check_conditioning(W)
    return np.linalg.solve(W, b)


def translation_jacobian(points, cameras, detections, confidence) -> np.ndarray:
    """d t / d P_m for every landmark, as (M,3,3)."""
    terms = _ray_terms(cameras, detections, confidence)
    W, _ = _normal_system(points, terms)
    _check_conditioning(W)
    M = len(np.asarray(points))
    acc = np.zeros((M, 3, 3))
    eye = np.eye(3)
    for _, dirs, sigma in terms:
        D = dirs[:, :, None] * dirs[:, None, :]
        acc += sigma[:, None, None] * (D - eye[None])
    Winv = np.linalg.inv(W)
    return np.einsum("ij,mjk->mik", Winv, acc)


def translation_energy(points, t, cameras, detections, confidence):
    """Ray-distance energy and its gradient in t (for verification)."""
    terms = _ray_terms(cameras, detections, confidence)
    P = np.asarray(points, dtype=np.float64)
    E = 0.0
    g = np.zeros(3)
    eye = np.eye(3)
    for o, dirs, sigma in terms:
        a = P + t - o
        proj = eye[None] - dirs[:, :, None] * dirs[:, None, :]
        Ma = np.einsum("mij,mj->mi", proj, a)
        E += float(np.sum(sigma * np.einsum("mi,mi->m", a, Ma)))
        g += 2.0 * np.einsum("m,mi->i", sigma, Ma)
    return E, g
