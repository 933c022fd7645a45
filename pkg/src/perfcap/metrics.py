"""Evaluation metrics: landmark errors in mm, 3D PCK/AUC, mask IoU.

Landmark metrics take (F, E, 3) arrays in meters and report millimeters.
The PCK family is root-relative (pelvis-centered); MPJPE is reported after
a per-frame similarity alignment, the global landmark error (GLE) without
any alignment.
"""

from dataclasses import dataclass, field

import numpy as np

from .deform import GraphDeformation, deform_vertices
from .kinematics import forward_kinematics, node_skinning
from .raster import render_mask

PCK_THRESH_MM = 150.0
AUC_STEPS_MM = np.arange(0.0, 151.0, 5.0)


def eval_subset(skeleton):
    """(indices of the metric landmarks, index of the root landmark)."""
    idx = np.array([skeleton.landmark_index(r) for r in skeleton.eval_landmarks])
    return idx, skeleton.landmark_index(skeleton.root_landmark)


def gle(pred, gt) -> float:
    """Global landmark error: mean world-space distance, mm."""
    d = np.linalg.norm(np.asarray(pred) - np.asarray(gt), axis=-1)
    return float(np.mean(d) * 1000.0)


def pck3d(pred, gt, pred_root, gt_root, threshold_mm=PCK_THRESH_MM) -> float:
    """Root-relative 3D PCK in percent; the threshold is inclusive.

    pred/gt are (F,E,3), the roots (F,3).
    """
    p = np.asarray(pred) - np.asarray(pred_root)[:, None, :]
    g = np.asarray(gt) - np.asarray(gt_root)[:, None, :]
    d = np.linalg.norm(p - g, axis=-1) * 1000.0
    return float(np.mean(d <= threshold_mm) * 100.0)


def auc(pred, gt, pred_root, gt_root) -> float:
    """Mean PCK over thresholds 0..150 mm in 5 mm steps."""
    p = np.asarray(pred) - np.asarray(pred_root)[:, None, :]
    g = np.asarray(gt) - np.asarray(gt_root)[:, None, :]
    d = np.linalg.norm(p - g, axis=-1) * 1000.0
    return float(np.mean([np.mean(d <= t) * 100.0 for t in AUC_STEPS_MM]))


def procrustes_align(X, Y):
    """Similarity transform (s, R, t) minimizing ||s R X + t - Y||^2.

    Proper rotation only (no reflection).  X, Y are (N,3).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    cov = Yc.T @ Xc / len(X)
    U, S, Vt = np.linalg.svd(cov)
    sgn = np.ones(3)
    if np.linalg.det(U @ Vt) < 0:
        sgn[2] = -1.0
    R = U @ np.diag(sgn) @ Vt
    var = np.einsum("ni,ni->", Xc, Xc) / len(X)
    s = float(np.sum(S * sgn) / var) if var > 0 else 1.0
    t = my - s * R @ mx
    return s, R, t


def mpjpe_procrustes(pred, gt) -> float:
    """Mean per-landmark error in mm after per-frame similarity alignment."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    errs = []
    for f in range(pred.shape[0]):
        s, R, t = procrustes_align(pred[f], gt[f])
        aligned = pred[f] @ (s * R).T + t
        errs.append(np.linalg.norm(aligned - gt[f], axis=1))
    return float(np.mean(np.concatenate(errs)) * 1000.0)


def mask_iou(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def render_ious(character, cameras, poses, deformations, gt_masks,
                override_trans=None) -> np.ndarray:
    """IoU of rendered model masks against observed masks, (F,C).

    deformations None renders the undeformed (pose-only) surface; pass
    override_trans (F,3) to substitute reference translations when the
    solve's own translation is not meaningful (monocular).
    """
    F, C = gt_masks.shape[:2]
    out = np.zeros((F, C))
    tris = character.mesh.triangles
    K = character.graph.n_nodes
    for f in range(F):
        pose = poses[f]
        fk = forward_kinematics(character.skeleton, pose.theta, pose.alpha)
        nt = node_skinning(character, fk)
        deformation = (deformations[f] if deformations is not None
                       else GraphDeformation.identity(K))
        trans = pose.trans if override_trans is None else override_trans[f]
        verts = deform_vertices(character, deformation, nt, trans)
        for c in range(C):
            out[f, c] = mask_iou(render_mask(cameras[c], verts, tris),
                                 gt_masks[f, c])
    return out


@dataclass
class MetricReport:
    gle_mm: float = None
    pck150: float = None
    auc_0_150: float = None
    mpjpe_mm: float = None
    amviou: float = None
    per_view_iou: list = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {}
        for k in ("gle_mm", "pck150", "auc_0_150", "mpjpe_mm", "amviou"):
            v = getattr(self, k)
            if v is not None:
                d[k] = float(v)
        if self.per_view_iou is not None:
            d["per_view_iou"] = [float(x) for x in self.per_view_iou]
        d.update(self.extra)
        return d

    def lines(self):
        rows = []
        if self.gle_mm is not None:
            rows.append(f"GLE            {self.gle_mm:8.2f} mm")
        if self.pck150 is not None:
            rows.append(f"3DPCK@150mm    {self.pck150:8.2f} %")
        if self.auc_0_150 is not None:
            rows.append(f"AUC (0..150)   {self.auc_0_150:8.2f}")
        if self.mpjpe_mm is not None:
            rows.append(f"MPJPE (sim)    {self.mpjpe_mm:8.2f} mm")
        if self.amviou is not None:
            rows.append(f"AMVIoU         {self.amviou:8.4f}")
        return rows


def landmark_report(skeleton, pred_landmarks, gt_landmarks) -> MetricReport:
    """Standard pose metrics on the evaluation landmark subset."""
    sub, root = eval_subset(skeleton)
    p = np.asarray(pred_landmarks)
    g = np.asarray(gt_landmarks)
    return MetricReport(
        gle_mm=gle(p[:, sub], g[:, sub]),
        pck150=pck3d(p[:, sub], g[:, sub], p[:, root], g[:, root]),
        auc_0_150=auc(p[:, sub], g[:, sub], p[:, root], g[:, root]),
        mpjpe_mm=mpjpe_procrustes(p[:, sub], g[:, sub]),
    )
