"""Pure-Python rotated-rectangle IoU kernel.

Fallback used when the compiled extension ``bevtrack._iou_core`` is not
available (or is disabled via BEVTRACK_PURE_PY=1). Implements the same
algorithm: Sutherland-Hodgman clipping of one rectangle footprint by the
other, intersection area via the shoelace formula.
"""

import math

import numpy as np

COMPILED = False

# Tolerance for the half-plane inside test; points lying on a clip edge are
# kept so that identical rectangles clip to themselves.
_EDGE_EPS = 1e-9
_DEGENERATE_EPS = 1e-12


def _corners(cx, cy, length, width, yaw):
    """BEV footprint corners in counter-clockwise order."""
    c = math.cos(yaw)
    s = math.sin(yaw)
    dx = 0.5 * length
    dy = 0.5 * width
    return [
        (cx + c * dx - s * dy, cy + s * dx + c * dy),
        (cx - c * dx - s * dy, cy - s * dx + c * dy),
        (cx - c * dx + s * dy, cy - s * dx - c * dy),
        (cx + c * dx + s * dy, cy + s * dx - c * dy),
    ]


def _clip(poly, a, b):
    """Clip polygon by the half-plane left of directed edge a->b."""
    ex = b[0] - a[0]
    ey = b[1] - a[1]
    out = []
    if not poly:
        return out
    sx, sy = poly[-1]
    s_in = ex * (sy - a[1]) - ey * (sx - a[0]) >= -_EDGE_EPS
    for px, py in poly:
        p_in = ex * (py - a[1]) - ey * (px - a[0]) >= -_EDGE_EPS
        if p_in != s_in:
            dx = px - sx
            dy = py - sy
            den = ex * dy - ey * dx
            if abs(den) > _DEGENERATE_EPS:
                t = (ex * (a[1] - sy) - ey * (a[0] - sx)) / den
                out.append((sx + t * dx, sy + t * dy))
            # near-parallel crossing within tolerance: skip the intersection
            # point, the neighbouring vertices bound the area error by eps
        if p_in:
            out.append((px, py))
        sx, sy, s_in = px, py, p_in
    return out


def _shoelace(poly):
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        acc += x0 * y1 - x1 * y0
        x0, y0 = x1, y1
    return 0.5 * abs(acc)


def rect_iou(ax, ay, al, aw, ayaw, bx, by, bl, bw, byaw):
    """IoU of two yaw-rotated BEV rectangles (cx, cy, length, width, yaw)."""
    pa = _corners(ax, ay, al, aw, ayaw)
    pb = _corners(bx, by, bl, bw, byaw)
    poly = pa
    prev = pb[-1]
    for v in pb:
        poly = _clip(poly, prev, v)
        if not poly:
            break
        prev = v
    inter = _shoelace(poly)
    union = al * aw + bl * bw - inter
    if union <= _DEGENERATE_EPS:
        return 0.0
    iou = inter / union
    return min(max(iou, 0.0), 1.0)


def iou_matrix(boxes_a, boxes_b):
    """Pairwise rect_iou for two (N,5) / (M,5) arrays of BEV rectangles."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64)
    boxes_b = np.asarray(boxes_b, dtype=np.float64)
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        a = boxes_a[i]
        for j in range(m):
            b = boxes_b[j]
            out[i, j] = rect_iou(a[0], a[1], a[2], a[3], a[4],
                                 b[0], b[1], b[2], b[3], b[4])
    return out
