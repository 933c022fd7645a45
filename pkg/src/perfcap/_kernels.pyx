# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: z-buffer rasterizer and exact distance transform.

Expression-for-expression mirror of _kernels_py (built with fp-contract
off), so both backends return bit-identical float64 arrays.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef double Z_NEAR = 1e-6


def rasterize_depth(verts, tris, int width, int height):
    """Depth-buffer a triangle mesh given pixel-space vertices.

    Same contract as the python backend: top-left fill rule, pixel centers
    on integer coordinates, perspective-correct depth, +inf background,
    triangles touching the camera plane skipped.
    """
    cdef double[:, ::1] V = np.ascontiguousarray(verts, dtype=np.float64)
    cdef long long[:, ::1] T = np.ascontiguousarray(tris, dtype=np.int64)
    out = np.full((height, width), np.inf)
    cdef double[:, ::1] depth = out
    cdef Py_ssize_t t, n_tris = T.shape[0]
    cdef long long i0, i1, i2
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2
    cdef double area2, tmp, iz0, iz1, iz2
    cdef double minx, maxx, miny, maxy
    cdef int xmin, xmax, ymin, ymax, px, py
    cdef bint tl0, tl1, tl2, ok0, ok1, ok2
    cdef double fx, fy, w0, w1, w2, b0, b1, b2, inv_z, d

    for t in range(n_tris):
        i0 = T[t, 0]
        i1 = T[t, 1]
        i2 = T[t, 2]
        x0 = V[i0, 0]; y0 = V[i0, 1]; z0 = V[i0, 2]
        x1 = V[i1, 0]; y1 = V[i1, 1]; z1 = V[i1, 2]
        x2 = V[i2, 0]; y2 = V[i2, 1]; z2 = V[i2, 2]
        if z0 <= Z_NEAR or z1 <= Z_NEAR or z2 <= Z_NEAR:
            continue
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            tmp = x1; x1 = x2; x2 = tmp
            tmp = y1; y1 = y2; y2 = tmp
            tmp = z1; z1 = z2; z2 = tmp
            area2 = -area2
        minx = x0
        if x1 < minx: minx = x1
        if x2 < minx: minx = x2
        maxx = x0
        if x1 > maxx: maxx = x1
        if x2 > maxx: maxx = x2
        miny = y0
        if y1 < miny: miny = y1
        if y2 < miny: miny = y2
        maxy = y0
        if y1 > maxy: maxy = y1
        if y2 > maxy: maxy = y2
        xmin = <int>ceil(minx)
        xmax = <int>floor(maxx)
        ymin = <int>ceil(miny)
        ymax = <int>floor(maxy)
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
        tl0 = (y1 == y2 and x2 > x1) or (y2 < y1)
        tl1 = (y2 == y0 and x0 > x2) or (y0 < y2)
        tl2 = (y0 == y1 and x1 > x0) or (y1 < y0)
        iz0 = 1.0 / z0
        iz1 = 1.0 / z1
        iz2 = 1.0 / z2
        for py in range(ymin, ymax + 1):
            fy = <double>py
            for px in range(xmin, xmax + 1):
                fx = <double>px
                w0 = (x2 - x1) * (fy - y1) - (y2 - y1) * (fx - x1)
                ok0 = w0 > 0.0 or (w0 == 0.0 and tl0)
                if not ok0:
                    continue
                w1 = (x0 - x2) * (fy - y2) - (y0 - y2) * (fx - x2)
                ok1 = w1 > 0.0 or (w1 == 0.0 and tl1)
                if not ok1:
                    continue
                w2 = (x1 - x0) * (fy - y0) - (y1 - y0) * (fx - x0)
                ok2 = w2 > 0.0 or (w2 == 0.0 and tl2)
                if not ok2:
                    continue
                b0 = w0 / area2
                b1 = w1 / area2
                b2 = w2 / area2
                inv_z = b0 * iz0 + b1 * iz1 + b2 * iz2
                d = 1.0 / inv_z
                if d < depth[py, px]:
                    depth[py, px] = d
    return out


cdef void _envelope_1d(double* g, double* out, int* v, double* z, Py_ssize_t n) noexcept nogil:
    """Row pass of the two-pass exact EDT: lower envelope of parabolas.

    g holds squared distances (may be +inf); out receives the 1D result
    min_q (i - q)^2 + g[q].
    """
    cdef Py_ssize_t q, j
    cdef int k = -1
    cdef double s
    for q in range(n):
        if g[q] == INFINITY:
            continue
        while True:
            if k < 0:
                k = 0
                v[0] = <int>q
                z[0] = -INFINITY
                break
            s = ((g[q] + <double>(q * q)) - (g[v[k]] + <double>(v[k] * v[k]))) \
                / <double>(2 * q - 2 * v[k])
            if s <= z[k]:
                k -= 1
            else:
                k += 1
                v[k] = <int>q
                z[k] = s
                break
    if k < 0:
        for q in range(n):
            out[q] = INFINITY
        return
    j = 0
    for q in range(n):
        while j < k and z[j + 1] < <double>q:
            j += 1
        out[q] = <double>((q - v[j]) * (q - v[j])) + g[v[j]]


def distance_transform(mask):
    """Exact Euclidean distance in pixels to the nearest True pixel."""
    cdef cnp.uint8_t[:, ::1] M = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t H = M.shape[0], W = M.shape[1]
    out = np.empty((H, W))
    cdef double[:, ::1] D = out
    sq = np.empty((H, W))
    cdef double[:, ::1] G = sq
    cdef Py_ssize_t x, y
    cdef long long cnt, big = H + 7
    # column pass: squared vertical distance to the nearest mask pixel
    for x in range(W):
        cnt = big
        for y in range(H):
            if M[y, x]:
                cnt = 0
            elif cnt < big:
                cnt += 1
            G[y, x] = <double>(cnt * cnt) if cnt < big else INFINITY
        cnt = big
        for y in range(H - 1, -1, -1):
            if M[y, x]:
                cnt = 0
            elif cnt < big:
                cnt += 1
            if cnt < big and <double>(cnt * cnt) < G[y, x]:
                G[y, x] = <double>(cnt * cnt)
    # row pass: lower envelope over columns
    row = np.empty(W)
    vbuf = np.empty(W, dtype=np.int32)
    zbuf = np.empty(W + 1)
    cdef double[::1] Rv = row
    cdef int[::1] Vv = vbuf
    cdef double[::1] Zv = zbuf
    for y in range(H):
        _envelope_1d(&G[y, 0], &Rv[0], &Vv[0], &Zv[0], W)
        for x in range(W):
            D[y, x] = sqrt(Rv[x])
    return out
