# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rotated-rectangle IoU kernel.

Same algorithm as bevtrack._iou_py (Sutherland-Hodgman clip + shoelace),
written against fixed-size C buffers. A quad clipped by four half-planes
has at most 8 vertices; 16 leaves headroom for degenerate duplicates.
"""

from libc.math cimport cos, sin, fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

COMPILED = True

cdef enum:
    MAXV = 16

cdef double EDGE_EPS = 1e-9
cdef double DEGENERATE_EPS = 1e-12


cdef void _corners(double cx, double cy, double length, double width,
                   double yaw, double* xs, double* ys) noexcept nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double dx = 0.5 * length
    cdef double dy = 0.5 * width
    xs[0] = cx + c * dx - s * dy; ys[0] = cy + s * dx + c * dy
    xs[1] = cx - c * dx - s * dy; ys[1] = cy - s * dx + c * dy
    xs[2] = cx - c * dx + s * dy; ys[2] = cy - s * dx - c * dy
    xs[3] = cx + c * dx + s * dy; ys[3] = cy + s * dx - c * dy


cdef int _clip(double* xs, double* ys, int n, double ax, double ay,
               double bx, double by, double* ox, double* oy) noexcept nogil:
    cdef double ex = bx - ax
    cdef double ey = by - ay
    cdef int m = 0
    cdef int i
    cdef double sx, sy, px, py, dx, dy, den, t
    cdef bint s_in, p_in
    if n == 0:
        return 0
    sx = xs[n - 1]
    sy = ys[n - 1]
    s_in = ex * (sy - ay) - ey * (sx - ax) >= -EDGE_EPS
    for i in range(n):
        px = xs[i]
        py = ys[i]
        p_in = ex * (py - ay) - ey * (px - ax) >= -EDGE_EPS
        if p_in != s_in:
            dx = px - sx
            dy = py - sy
            den = ex * dy - ey * dx
            if fabs(den) > DEGENERATE_EPS and m < MAXV:
                t = (ex * (ay - sy) - ey * (ax - sx)) / den
                ox[m] = sx + t * dx
                oy[m] = sy + t * dy
                m += 1
        if p_in and m < MAXV:
            ox[m] = px
            oy[m] = py
            m += 1
        sx = px
        sy = py
        s_in = p_in
    return m


cdef double _shoelace(double* xs, double* ys, int n) noexcept nogil:
    cdef double acc = 0.0
    cdef int i
    cdef double x0, y0
    if n < 3:
        return 0.0
    x0 = xs[n - 1]
    y0 = ys[n - 1]
    for i in range(n):
        acc += x0 * ys[i] - xs[i] * y0
        x0 = xs[i]
        y0 = ys[i]
    return 0.5 * fabs(acc)


cdef double _rect_iou(double ax, double ay, double al, double aw, double ayaw,
                      double bx, double by, double bl, double bw,
                      double byaw) noexcept nogil:
    cdef double pax[4]
    cdef double pay[4]
    cdef double pbx[4]
    cdef double pby[4]
    cdef double bufx[MAXV]
    cdef double bufy[MAXV]
    cdef double tmpx[MAXV]
    cdef double tmpy[MAXV]
    cdef int n = 4
    cdef int i
    cdef double e0x, e0y, e1x, e1y, inter, union_
    _corners(ax, ay, al, aw, ayaw, pax, pay)
    _corners(bx, by, bl, bw, byaw, pbx, pby)
    for i in range(4):
        bufx[i] = pax[i]
        bufy[i] = pay[i]
    e0x = pbx[3]
    e0y = pby[3]
    for i in range(4):
        e1x = pbx[i]
        e1y = pby[i]
        n = _clip(bufx, bufy, n, e0x, e0y, e1x, e1y, tmpx, tmpy)
        if n == 0:
            break
        bufx[:] = tmpx[:]
        bufy[:] = tmpy[:]
        e0x = e1x
        e0y = e1y
    inter = _shoelace(bufx, bufy, n)
    union_ = al * aw + bl * bw - inter
    if union_ <= DEGENERATE_EPS:
        return 0.0
    inter = inter / union_
    if inter < 0.0:
        return 0.0
    if inter > 1.0:
        return 1.0
    return inter


def rect_iou(double ax, double ay, double al, double aw, double ayaw,
             double bx, double by, double bl, double bw, double byaw):
    """IoU of two yaw-rotated BEV rectangles (cx, cy, length, width, yaw)."""
    return _rect_iou(ax, ay, al, aw, ayaw, bx, by, bl, bw, byaw)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise rect_iou for two (N,5) / (M,5) arrays of BEV rectangles."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(boxes_a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = \
        np.ascontiguousarray(boxes_b, dtype=np.float64)
    cdef int n = a.shape[0]
    cdef int m = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m))
    cdef int i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = _rect_iou(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                                      a[i, 4], b[j, 0], b[j, 1], b[j, 2],
                                      b[j, 3], b[j, 4])
    return out
