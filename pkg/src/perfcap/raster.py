"""Rendering-side geometry: backend dispatch, visibility, silhouette tools.

The heavy per-iteration kernels (depth rasterization, distance transform)
live in a compiled extension with a pure-python twin.  Import prefers the
extension; set PERFCAP_FORCE_FALLBACK=1 to force the python path.  Both
produce bit-identical outputs, so results never depend on which one loaded.
"""

import os
from dataclasses import dataclass

import numpy as np

from .camera import Z_MIN

if os.environ.get("PERFCAP_FORCE_FALLBACK"):
    from . import _kernels_py as _k
else:
    try:
        from . import _kernels as _k
    except ImportError:
        from . import _kernels_py as _k

BACKEND = _k.BACKEND

VISIBILITY_REL_TOL = 0.01


def pixel_verts(camera, vertices) -> np.ndarray:
    """(N,3) array of pixel u, pixel v, camera depth for the rasterizer.

    Vertices at or behind the image plane keep their (nonpositive) depth so
    the kernel drops their triangles, but get dummy coordinates instead of
    NaN so the kernel never sees one.
    """
    pc = camera.to_camera(vertices)
    z = pc[:, 2]
    safe = np.where(z > Z_MIN, z, 1.0)
    u = camera.K[0, 0] * pc[:, 0] / safe + camera.K[0, 2]
    v = camera.K[1, 1] * pc[:, 1] / safe + camera.K[1, 2]
    return np.stack([u, v, z], axis=1)


def render_depth(camera, vertices, triangles) -> np.ndarray:
    """Z-buffer of the mesh from this camera, +inf background."""
    pv = pixel_verts(camera, vertices)
    return _k.rasterize_depth(pv, np.asarray(triangles, dtype=np.int64),
                              camera.width, camera.height)


def render_mask(camera, vertices, triangles) -> np.ndarray:
    return np.isfinite(render_depth(camera, vertices, triangles))


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest foreground pixel."""
    return _k.distance_transform(np.ascontiguousarray(mask, dtype=np.uint8))


@dataclass
class BoundarySet:
    """Visible silhouette-boundary vertices of the rendered model in one view."""

    indices: np.ndarray   # (B,) vertex ids
    pixels: np.ndarray    # (B,2) continuous projected pixel positions
    normals: np.ndarray   # (B,2) outward image-space normals (may be zero)
    depth: np.ndarray     # (H,W) the z-buffer they were found in


def boundary_vertices(camera, vertices, triangles, depth=None) -> BoundarySet:
    """Find vertices that are visible and sit on the rendered mask boundary.

    A vertex is visible when its depth agrees with the z-buffer at its
    nearest pixel within 1% of its own depth, and on the boundary when any
    4-neighbor of that pixel is background (off-image counts as background).
    The outward normal is a central difference of the mask indicator.
    """
    if depth is None:
        depth = render_depth(camera, vertices, triangles)
    H, W = depth.shape
    pv = pixel_verts(camera, vertices)
    z = pv[:, 2]
    px = np.rint(pv[:, 0]).astype(np.int64)
    py = np.rint(pv[:, 1]).astype(np.int64)
    ok = (z > Z_MIN) & (px >= 0) & (px < W) & (py >= 0) & (py < H)
    idx = np.nonzero(ok)[0]
    zbuf = depth[py[idx], px[idx]]
    vis = np.abs(z[idx] - zbuf) <= VISIBILITY_REL_TOL * z[idx]
    idx = idx[vis]

    mask = np.isfinite(depth)
    pad = np.zeros((H + 2, W + 2), dtype=bool)
    pad[1:-1, 1:-1] = mask
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    on_boundary = mask & ~interior
    sel = on_boundary[py[idx], px[idx]]
    idx = idx[sel]

    F = pad.astype(np.float64)
    ix, iy = px[idx] + 1, py[idx] + 1
    n = np.stack([F[iy, ix - 1] - F[iy, ix + 1],
                  F[iy - 1, ix] - F[iy + 1, ix]], axis=1)
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.where(norms > 0, n / np.where(norms > 0, norms, 1.0), 0.0)
    return BoundarySet(indices=idx, pixels=pv[idx, :2], normals=n, depth=depth)


def sample_dt(dt, points):
    """Bilinear sample of a distance image at continuous pixel positions.

    Returns values (B,) and gradients d value / d pixel (B,2).  Samples are
    clamped to the image; a clamped axis contributes zero gradient.
    """
    dt = np.asarray(dt, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    H, W = dt.shape
    u = np.clip(pts[:, 0], 0.0, W - 1.0)
    v = np.clip(pts[:, 1], 0.0, H - 1.0)
    x0 = np.minimum(np.floor(u), W - 2).astype(np.int64) if W > 1 else np.zeros(len(u), np.int64)
    y0 = np.minimum(np.floor(v), H - 2).astype(np.int64) if H > 1 else np.zeros(len(v), np.int64)
    fx = u - x0
    fy = v - y0
    d00 = dt[y0, x0]
    d01 = dt[y0, x0 + 1] if W > 1 else d00
    d10 = dt[y0 + 1, x0] if H > 1 else d00
    d11 = dt[y0 + 1, x0 + 1] if W > 1 and H > 1 else d00
    top = d00 + fx * (d01 - d00)
    bot = d10 + fx * (d11 - d10)
    vals = top + fy * (bot - top)
    gu = (d01 - d00) + fy * ((d11 - d10) - (d01 - d00))
    gv = bot - top
    inside_u = (pts[:, 0] > 0.0) & (pts[:, 0] < W - 1.0)
    inside_v = (pts[:, 1] > 0.0) & (pts[:, 1] < H - 1.0)
    grads = np.stack([np.where(inside_u, gu, 0.0), np.where(inside_v, gv, 0.0)], axis=1)
    return vals, grads


def directional_weight(dt, boundary: BoundarySet) -> np.ndarray:
    """Gate per boundary vertex: 1 when the observed distance field grows
    along the model's outward normal (the vertex overshoots the observed
    silhouette and should pull back), else 0."""
    H, W = dt.shape
    px = np.rint(boundary.pixels[:, 0]).astype(np.int64)
    py = np.rint(boundary.pixels[:, 1]).astype(np.int64)
    xm = np.clip(px - 1, 0, W - 1)
    xp = np.clip(px + 1, 0, W - 1)
    ym = np.clip(py - 1, 0, H - 1)
    yp = np.clip(py + 1, 0, H - 1)
    gx = 0.5 * (dt[py, xp] - dt[py, xm])
    gy = 0.5 * (dt[yp, px] - dt[ym, px])
    dots = gx * boundary.normals[:, 0] + gy * boundary.normals[:, 1]
    return (dots >= 0.0).astype(np.float64)
