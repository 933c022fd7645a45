"""Calibrated pinhole cameras and the multi-view observation container.

Conventions: extrinsics map world to camera, x_cam = R @ X + t; the image v
axis grows downward; pixel centers sit on integer coordinates.  Points are
only meaningful in front of the camera (z_cam > 0); callers gate on the
returned depths.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import formats
from .errors import CalibrationError, InvalidInputError

Z_MIN = 1e-6


@dataclass
class Camera:
    K: np.ndarray            # (3,3) intrinsics
    R: np.ndarray            # (3,3) world-to-camera rotation
    t: np.ndarray            # (3,)  world-to-camera translation
    width: int
    height: int

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).ravel()
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise CalibrationError("focal lengths must be positive")
        if abs(np.linalg.det(self.R) - 1.0) > 1e-6 or \
           np.abs(self.R @ self.R.T - np.eye(3)).max() > 1e-6:
            raise CalibrationError("extrinsic rotation is not a proper rotation")
        if self.width < 1 or self.height < 1:
            raise CalibrationError("image size must be positive")

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    def to_camera(self, points):
        return np.asarray(points).reshape(-1, 3) @ self.R.T + self.t

    def project(self, points):
        """World points (M,3) -> pixels (M,2), depths (M,).

        Points at or behind the image plane get pixel NaN; the depth is
        still returned so callers can mask them out.
        """
        pc = self.to_camera(points)
        z = pc[:, 2]
        safe = np.where(np.abs(z) < Z_MIN, np.nan, z)
        u = self.K[0, 0] * pc[:, 0] / safe + self.K[0, 2]
        v = self.K[1, 1] * pc[:, 1] / safe + self.K[1, 2]
        pix = np.stack([u, v], axis=1)
        pix[z < Z_MIN] = np.nan
        return pix, z

    def project_with_jacobian(self, points):
        """Pixels (M,2), depths (M,), and d pixel / d world point (M,2,3)."""
        pix, z = self.project(points)
        pc = self.to_camera(points)
        fx, fy = self.K[0, 0], self.K[1, 1]
        M = len(pc)
        A = np.zeros((M, 2, 3))
        zc = np.where(np.abs(pc[:, 2]) < Z_MIN, np.inf, pc[:, 2])
        A[:, 0, 0] = fx / zc
        A[:, 0, 2] = -fx * pc[:, 0] / zc**2
        A[:, 1, 1] = fy / zc
        A[:, 1, 2] = -fy * pc[:, 1] / zc**2
        return pix, z, A @ self.R

    def pixel_ray(self, pixel):
        """World-space unit ray through a pixel: (origin, direction)."""
        p = np.asarray(pixel, dtype=np.float64).ravel()
        h = np.array([p[0], p[1], 1.0])
        d = self.R.T @ np.linalg.solve(self.K, h)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise InvalidInputError("degenerate pixel ray")
        return self.center, d / n


def save_rig(path, cameras):
    formats.write_json(path, {"cameras": [{
        "K": [[float(x) for x in row] for row in c.K],
        "R": [[float(x) for x in row] for row in c.R],
        "t": [float(x) for x in c.t],
        "width": c.width, "height": c.height,
    } for c in cameras]})


def load_rig(path):
    d = formats.read_json(path)
    formats.require_fields(d, ["cameras"], os.path.basename(path))
    cams = []
    for i, rec in enumerate(d["cameras"]):
        formats.require_fields(rec, ["K", "R", "t", "width", "height"],
                               f"{os.path.basename(path)} camera {i}")
        try:
            cams.append(Camera(K=rec["K"], R=rec["R"], t=rec["t"],
                               width=int(rec["width"]), height=int(rec["height"])))
        except CalibrationError as exc:
            raise CalibrationError(f"{path} camera {i}: {exc}") from exc
    if not cams:
        raise CalibrationError(f"{path}: empty camera rig")
    return cams


@dataclass
class ObservationSet:
    """Detected 2D landmarks and foreground masks for a sequence.

    detections (F,C,M,2) pixel positions, confidence (F,C,M) in [0,1];
    a confidence of 0 marks a missing detection.  masks is (F,C,H,W) bool
    foreground, or None when only keypoints are available.
    """

    detections: np.ndarray
    confidence: np.ndarray
    masks: np.ndarray = None

    def __post_init__(self):
        self.detections = np.asarray(self.detections, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.detections.ndim != 4 or self.detections.shape[3] != 2:
            raise InvalidInputError("detections must be (F,C,M,2)")
        if self.confidence.shape != self.detections.shape[:3]:
            raise InvalidInputError("confidence must be (F,C,M)")
        if np.any((self.confidence < 0) | (self.confidence > 1)):
            raise InvalidInputError("confidence must lie in [0,1]")
        if self.masks is not None:
            self.masks = np.asarray(self.masks, dtype=bool)
            if self.masks.shape[:2] != self.detections.shape[:2]:
                raise InvalidInputError("masks must be (F,C,H,W)")

    @property
    def n_frames(self):
        return self.detections.shape[0]

    @property
    def n_cameras(self):
        return self.detections.shape[1]


def save_observations(path, obs: ObservationSet):
    formats.ensure_dir(path)
    formats.write_json(os.path.join(path, "detections.json"), {
        "shape": list(obs.detections.shape[:3]),
        "detections": obs.detections.tolist(),
        "confidence": obs.confidence.tolist(),
    })
    if obs.masks is not None:
        mdir = os.path.join(path, "masks")
        formats.ensure_dir(mdir)
        for f in range(obs.n_frames):
            for c in range(obs.n_cameras):
                formats.write_pgm(os.path.join(mdir, f"f{f:04d}_c{c:02d}.pgm"),
                                  obs.masks[f, c])


def load_observations(path) -> ObservationSet:
    d = formats.read_json(os.path.join(path, "detections.json"))
    formats.require_fields(d, ["shape", "detections", "confidence"], "detections.json")
    det = np.asarray(d["detections"], dtype=np.float64)
    conf = np.asarray(d["confidence"], dtype=np.float64)
    F, C, M = d["shape"]
    det = det.reshape(F, C, M, 2)
    conf = conf.reshape(F, C, M)
    masks = None
    mdir = os.path.join(path, "masks")
    if os.path.isdir(mdir):
        first = formats.read_pgm(os.path.join(mdir, "f0000_c00.pgm"))
        masks = np.zeros((F, C) + first.shape, dtype=bool)
        for f in range(F):
            for c in range(C):
                masks[f, c] = formats.read_pgm(os.path.join(mdir, f"f{f:04d}_c{c:02d}.pgm"))
    return ObservationSet(detections=det, confidence=conf, masks=masks)
