"""Weak-supervision energies and their analytic gradients.

Every term returns (value, gradient...) against the quantity the solver
steps on; chaining through kinematics or the deformation graph happens in
the solver.  Image-domain terms treat the discrete structure (which
vertices are on the silhouette boundary, their visibility, the direction
gate) as frozen constants of the current iterate, so the reported gradient
is exact for the continuous part.
"""

from dataclasses import dataclass

import numpy as np

from .camera import Z_MIN
from .kinematics import euler_batch_with_derivatives
from .raster import boundary_vertices, directional_weight, sample_dt

CONF_FLOOR = 0.4
ARAP_EPS_SQ = 1e-12   # smoothing scale 1e-6 on the branch length
SIL_DEADBAND_PX = 1.0  # distances below raster quantization carry no signal


def effective_confidence(confidence, floor=CONF_FLOOR):
    """Zero out low-confidence detections; keep the rest at full strength."""
    c = np.asarray(confidence, dtype=np.float64)
    return np.where(c >= floor, c, 0.0)


def keypoint_loss(points_world, cameras, detections, confidence, lam=None):
    """Confidence- and priority-weighted squared reprojection error.

    points_world (M,3) are the current world landmarks; detections (C,M,2).
    Returns the scalar and d loss / d point (M,3).  Points behind a camera
    contribute nothing for that view.
    """
    P = np.asarray(points_world, dtype=np.float64)
    M = len(P)
    lam = np.ones(M) if lam is None else np.asarray(lam, dtype=np.float64)
    value = 0.0
    grad = np.zeros((M, 3))
    for c, cam in enumerate(cameras):
        w = lam * confidence[c]
        pix, z, J = cam.project_with_jacobian(P)
        live = (w > 0) & (z > Z_MIN)
        if not live.any():
            continue
        r = pix[live] - detections[c][live]
        wl = w[live]
        value += float(np.sum(wl * np.einsum("mi,mi->m", r, r)))
        grad[live] += (2.0 * wl)[:, None] * np.einsum("mi,mij->mj", r, J[live])
    return value, grad


def limit_loss(theta, theta_min, theta_max):
    """One-sided quadratic barrier on joint angles outside their range."""
    th = np.asarray(theta, dtype=np.float64)
    over = np.maximum(th - theta_max, 0.0)
    under = np.maximum(theta_min - th, 0.0)
    value = float(np.sum(over * over) + np.sum(under * under))
    grad = 2.0 * over - 2.0 * under
    return value, grad


@dataclass
class SilhouetteTerms:
    """Frozen discrete structure of the silhouette term for one view."""

    indices: np.ndarray   # (B,) boundary vertex ids
    rho: np.ndarray       # (B,) direction gate in {0,1}
    valid: bool = True


def silhouette_terms(camera, dt_observed, vertices_world, triangles) -> SilhouetteTerms:
    """Boundary set and direction gate for the current model state.

    A view with an empty observed mask (all-inf distance image) is marked
    invalid and contributes nothing.
    """
    if not np.isfinite(dt_observed).any():
        return SilhouetteTerms(np.zeros(0, np.int64), np.zeros(0), valid=False)
    b = boundary_vertices(camera, vertices_world, triangles)
    rho = directional_weight(dt_observed, b)
    return SilhouetteTerms(indices=b.indices, rho=rho)


def silhouette_loss(camera, dt_observed, vertices_world, terms: SilhouetteTerms,
                    deadband=SIL_DEADBAND_PX):
    """Squared observed-silhouette distance of gated boundary vertices.

    Distances within `deadband` pixels are clamped to zero: a rasterized
    boundary is only localized to about a pixel, and the leftover sub-pixel
    distances otherwise act as a spurious inward force on every boundary
    vertex, enough to contract the whole surface over a long descent.

    Returns the scalar and a dense d loss / d vertex (N,3) that is zero off
    the boundary set.
    """
    N = len(vertices_world)
    grad = np.zeros((N, 3))
    if not terms.valid or len(terms.indices) == 0:
        return 0.0, grad
    pts = np.asarray(vertices_world, dtype=np.float64)[terms.indices]
    pix, z, J = camera.project_with_jacobian(pts)
    live = z > Z_MIN
    vals, gpix = sample_dt(dt_observed, pix[live])
    vals = np.maximum(vals - deadband, 0.0)
    w = terms.rho[live]
    value = float(np.sum(w * vals * vals))
    gv = (2.0 * w * vals)[:, None] * gpix                    # (B,2)
    grad[terms.indices[live]] = np.einsum("bi,bij->bj", gv, J[live])
    return value, grad


def keypoint_graph_loss(landmarks_world, cameras, detections, confidence):
    """Reprojection term for deformed landmarks: confidence-weighted only."""
    return keypoint_loss(landmarks_world, cameras, detections, confidence, lam=None)


def arap_loss(character, deformation):
    """Local rigidity of the deformation graph.

    For every directed graph edge the warped branch R(A_k)(G_l - G_k) +
    G_k + T_k should land on the warped neighbor G_l + T_l; deviations pay
    a rigidity-weighted smooth-L1 penalty.  Returns (value, dA, dT).
    """
    graph = character.graph
    edges, u = graph.edge_arrays()
    K = graph.n_nodes
    gA = np.zeros((K, 3))
    gT = np.zeros((K, 3))
    if len(edges) == 0:
        return 0.0, gA, gT
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    uu = np.concatenate([u, u])
    G = graph.node_positions
    A, T = deformation.A, deformation.T
    R, dR = euler_batch_with_derivatives(A)
    arm = G[dst] - G[src]
    d = np.einsum("eab,eb->ea", R[src], arm) + G[src] + T[src] - (G[dst] + T[dst])
    phi = np.sqrt(np.einsum("ei,ei->e", d, d) + ARAP_EPS_SQ)
    # subtract the smoothing floor so a rigidly moved graph costs exactly 0
    value = float(np.sum(uu * (phi - np.sqrt(ARAP_EPS_SQ))))
    gd = (uu / phi)[:, None] * d                              # (E2,3)
    np.add.at(gT, src, gd)
    np.add.at(gT, dst, -gd)
    rot = np.einsum("ejab,eb->eja", dR[src], arm)             # (E2,3,3)
    np.add.at(gA, src, np.einsum("eja,ea->ej", rot, gd))
    return value, gA, gT
