"""Pure-python kernels: z-buffer rasterizer and exact distance transform.

Mirror of the compiled module.  Expression order matches _kernels.pyx
operation for operation (and the extension builds with fp-contract off),
so both backends produce bit-identical float64 outputs.
"""

import numpy as np
from scipy import ndimage

BACKEND = "python"

Z_NEAR = 1e-6


def rasterize_depth(verts, tris, width, height):
    """Depth-buffer a triangle mesh given pixel-space vertices.

    verts (N,3): columns are pixel u, pixel v, camera depth z.  Pixel
    centers sit on integer coordinates; coverage follows a top-left fill
    rule so shared edges never double-rasterize; depth is interpolated
    perspective-correct (linear in 1/z).  Triangles with any vertex at or
    behind the image plane are skipped (no clipping).  Background is +inf.
    """
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    for t in range(len(tris)):
        i0, i1, i2 = tris[t]
        x0, y0, z0 = verts[i0]
        x1, y1, z1 = verts[i1]
        x2, y2, z2 = verts[i2]
        if z0 <= Z_NEAR or z1 <= Z_NEAR or z2 <= Z_NEAR:
            continue
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            x1, y1, z1, x2, y2, z2 = x2, y2, z2, x1, y1, z1
            area2 = -area2
        xmin = int(np.ceil(min(x0, x1, x2)))
        xmax = int(np.floor(max(x0, x1, x2)))
        ymin = int(np.ceil(min(y0, y1, y2)))
        ymax = int(np.floor(max(y0, y1, y2)))
        if xmin < 0:
            xmin = 0
        if ymin < 0:
            ymin = 0
        if xmax > width - 1:
            xmax = width - 1
        if ymax > height - 1:
            ymax = height - 1
        if xmin > xmax or ymin > ymax:
            continue
        # top-left rule per edge: edge k runs opposite vertex k
        tl0 = (y1 == y2 and x2 > x1) or (y2 < y1)
        tl1 = (y2 == y0 and x0 > x2) or (y0 < y2)
        tl2 = (y0 == y1 and x1 > x0) or (y1 < y0)
        iz0 = 1.0 / z0
        iz1 = 1.0 / z1
        iz2 = 1.0 / z2
        px = np.arange(xmin, xmax + 1, dtype=np.float64)[None, :]
        py = np.arange(ymin, ymax + 1, dtype=np.float64)[:, None]
        w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        inside = ((w0 > 0.0) | ((w0 == 0.0) & tl0)) \
            & ((w1 > 0.0) | ((w1 == 0.0) & tl1)) \
            & ((w2 > 0.0) | ((w2 == 0.0) & tl2))
        if not inside.any():
            continue
        b0 = w0 / area2
        b1 = w1 / area2
        b2 = w2 / area2
        inv_z = b0 * iz0 + b1 * iz1 + b2 * iz2
        with np.errstate(divide="ignore"):
            d = 1.0 / inv_z
        sub = depth[ymin:ymax + 1, xmin:xmax + 1]
        upd = inside & (d < sub)
        sub[upd] = d[upd]
    return depth


def distance_transform(mask):
    """Exact Euclidean distance in pixels to the nearest True pixel.

    Zero on the mask itself, +inf when the mask is empty.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    # scipy gives the distance of nonzero pixels to the nearest zero, so
    # feed it the complement; its squared distances are exact integers and
    # sqrt is correctly rounded, matching the compiled kernel bit for bit.
    return ndimage.distance_transform_edt(~mask)
