"""2D primitives for the simulator: point distances, ray casts, pair clearances.

Footprints are circles, oriented rectangles, and stadiums (a segment inflated
by a radius). Ray casts are vectorized over beam direction arrays. Pair
distance functions return surface-to-surface separation, <= 0 on contact or
overlap.
"""

from __future__ import annotations

import numpy as np

INF = np.inf


def rot_into(px, py, cx, cy, theta):
    """World point(s) -> frame of a shape centered at (cx,cy) rotated theta."""
    c, s = np.cos(theta), np.sin(theta)
    dx, dy = px - cx, py - cy
    return c * dx + s * dy, -s * dx + c * dy


def point_circle_distance(px, py, cx, cy, r):
    return np.hypot(px - cx, py - cy) - r


def point_rect_distance(px, py, cx, cy, theta, hx, hy):
    """Signed distance to an oriented box (negative inside)."""
    qx, qy = rot_into(px, py, cx, cy, theta)
    dx, dy = np.abs(qx) - hx, np.abs(qy) - hy
    outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
    inside = np.minimum(np.maximum(dx, dy), 0.0)
    return outside + inside


def point_segment_distance(px, py, x1, y1, x2, y2):
    vx, vy = x2 - x1, y2 - y1
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * vx + (py - y1) * vy) / L2, 0.0, 1.0)
    return np.hypot(px - (x1 + t * vx), py - (y1 + t * vy))


def point_stadium_distance(px, py, cx, cy, theta, half_len, r):
    """Signed distance to a stadium: core segment along the local x axis."""
    c, s = np.cos(theta), np.sin(theta)
    ax, ay = cx - half_len * c, cy - half_len * s
    bx, by = cx + half_len * c, cy + half_len * s
    return point_segment_distance(px, py, ax, ay, bx, by) - r


# -- ray casts (origin scalar, directions as arrays) -------------------------


def ray_circle(ox, oy, dx, dy, cx, cy, r):
    """First-hit parameter t per unit-length ray; inf where missed."""
    mx, my = ox - cx, oy - cy
    b = dx * mx + dy * my
    c = mx * mx + my * my - r * r
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near >= 0.0, t_near, np.where(t_far >= 0.0, 0.0, INF))
    return np.where(hit, t, INF)


def ray_rect(ox, oy, dx, dy, cx, cy, theta, hx, hy):
    """Slab test against an oriented box."""
    qx, qy = rot_into(ox, oy, cx, cy, theta)
    c, s = np.cos(theta), np.sin(theta)
    rdx = c * dx + s * dy
    rdy = -s * dx + c * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t1x = (-hx - qx) / rdx
        t2x = (hx - qx) / rdx
        t1y = (-hy - qy) / rdy
        t2y = (hy - qy) / rdy
    # degenerate axes: ray parallel to slab
    parx = np.abs(rdx) < 1e-12
    pary = np.abs(rdy) < 1e-12
    tminx = np.where(parx, np.where(np.abs(qx) <= hx, -INF, INF), np.minimum(t1x, t2x))
    tmaxx = np.where(parx, np.where(np.abs(qx) <= hx, INF, -INF), np.maximum(t1x, t2x))
    tminy = np.where(pary, np.where(np.abs(qy) <= hy, -INF, INF), np.minimum(t1y, t2y))
    tmaxy = np.where(pary, np.where(np.abs(qy) <= hy, INF, -INF), np.maximum(t1y, t2y))
    tmin = np.maximum(tminx, tminy)
    tmax = np.minimum(tmaxx, tmaxy)
    hit = (tmax >= tmin) & (tmax >= 0.0)
    t = np.where(tmin >= 0.0, tmin, 0.0)
    return np.where(hit, t, INF)


def ray_stadium(ox, oy, dx, dy, cx, cy, theta, half_len, r):
    """Stadium = oriented core rect + two end circles; first hit of the union."""
    c, s = np.cos(theta), np.sin(theta)
    ax, ay = cx - half_len * c, cy - half_len * s
    bx, by = cx + half_len * c, cy + half_len * s
    t = ray_rect(ox, oy, dx, dy, cx, cy, theta, half_len, r)
    t = np.minimum(t, ray_circle(ox, oy, dx, dy, ax, ay, r))
    t = np.minimum(t, ray_circle(ox, oy, dx, dy, bx, by, r))
    return t


def ray_walls(ox, oy, dx, dy, xmin, xmax, ymin, ymax):
    """Distance to the arena boundary from an interior point."""
    with np.errstate(divide="ignore"):
        tx = np.where(dx > 0, (xmax - ox) / dx, np.where(dx < 0, (xmin - ox) / dx, INF))
        ty = np.where(dy > 0, (ymax - oy) / dy, np.where(dy < 0, (ymin - oy) / dy, INF))
    return np.maximum(np.minimum(tx, ty), 0.0)


# -- pairwise footprint distances (placement clearance) ----------------------
#
# Footprint descriptors: ("circle", cx, cy, r)
#                        ("rect",   cx, cy, theta, hx, hy)
#                        ("stadium",cx, cy, theta, half_len, r)


def _rect_corners(cx, cy, theta, hx, hy):
    c, s = np.cos(theta), np.sin(theta)
    corners = []
    for sx, sy in ((1, 1), (1, -1), (-1, -1), (-1, 1)):
        corners.append((cx + c * hx * sx - s * hy * sy, cy + s * hx * sx + c * hy * sy))
    return corners


def _stadium_segment(cx, cy, theta, half_len):
    c, s = np.cos(theta), np.sin(theta)
    return (cx - half_len * c, cy - half_len * s, cx + half_len * c, cy + half_len * s)


def segment_segment_distance(a1, a2, b1, b2):
    """Min distance between two segments; 0 if they cross."""
    if _segments_intersect(a1, a2, b1, b2):
        return 0.0
    return min(point_segment_distance(a1[0], a1[1], b1[0], b1[1], b2[0], b2[1]),
               point_segment_distance(a2[0], a2[1], b1[0], b1[1], b2[0], b2[1]),
               point_segment_distance(b1[0], b1[1], a1[0], a1[1], a2[0], a2[1]),
               point_segment_distance(b2[0], b2[1], a1[0], a1[1], a2[0], a2[1]))


def _orient(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_intersect(a1, a2, b1, b2):
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # collinear / touching endpoints count as contact
    for p, seg in ((a1, (b1, b2)), (a2, (b1, b2)), (b1, (a1, a2)), (b2, (a1, a2))):
        if point_segment_distance(p[0], p[1], seg[0][0], seg[0][1], seg[1][0], seg[1][1]) == 0.0:
            return True
    return False


def _rects_overlap(ra, rb):
    """Separating-axis test for two oriented boxes."""
    for (cx, cy, theta, hx, hy), other in ((ra, rb), (rb, ra)):
        corners = _rect_corners(*other)
        qx, qy = rot_into(np.array([p[0] for p in corners]),
                          np.array([p[1] for p in corners]), cx, cy, theta)
        if qx.min() > hx or qx.max() < -hx or qy.min() > hy or qy.max() < -hy:
            return False
    return True


def _rect_rect_distance(ra, rb):
    if _rects_overlap(ra, rb):
        return -1.0
    ca = _rect_corners(*ra)
    cb = _rect_corners(*rb)
    best = INF
    for corners, rect in ((ca, rb), (cb, ra)):
        edges = _rect_corners(*rect)
        for px, py in corners:
            for k in range(4):
                x1, y1 = edges[k]
                x2, y2 = edges[(k + 1) % 4]
                best = min(best, point_segment_distance(px, py, x1, y1, x2, y2))
    return best


def _segment_rect_distance(seg, rect):
    """Min distance from a segment to a box boundary; -1 on overlap."""
    cx, cy, theta, hx, hy = rect
    for px, py in ((seg[0], seg[1]), (seg[2], seg[3])):
        if point_rect_distance(px, py, cx, cy, theta, hx, hy) <= 0.0:
            return -1.0
    corners = _rect_corners(cx, cy, theta, hx, hy)
    best = INF
    for k in range(4):
        x1, y1 = corners[k]
        x2, y2 = corners[(k + 1) % 4]
        d = segment_segment_distance((seg[0], seg[1]), (seg[2], seg[3]), (x1, y1), (x2, y2))
        if d == 0.0:
            return -1.0
        best = min(best, d)
    return best


def footprint_distance(a, b):
    """Surface separation between two footprints; <= 0 on contact/overlap."""
    a, b = (a, b) if _KIND_ORDER[a[0]] <= _KIND_ORDER[b[0]] else (b, a)
    ka, kb = a[0], b[0]
    if ka == "circle" and kb == "circle":
        return float(np.hypot(a[1] - b[1], a[2] - b[2]) - a[3] - b[3])
    if ka == "circle" and kb == "rect":
        return float(point_rect_distance(a[1], a[2], b[1], b[2], b[3], b[4], b[5]) - a[3])
    if ka == "circle" and kb == "stadium":
        return float(point_stadium_distance(a[1], a[2], b[1], b[2], b[3], b[4], b[5]) - a[3])
    if ka == "rect" and kb == "rect":
        return _rect_rect_distance(a[1:], b[1:])
    if ka == "rect" and kb == "stadium":
        seg = _stadium_segment(b[1], b[2], b[3], b[4])
        d = _segment_rect_distance(seg, a[1:])
        return d if d < 0 else d - b[5]
    # stadium-stadium
    sa = _stadium_segment(a[1], a[2], a[3], a[4])
    sb = _stadium_segment(b[1], b[2], b[3], b[4])
    d = segment_segment_distance((sa[0], sa[1]), (sa[2], sa[3]), (sb[0], sb[1]), (sb[2], sb[3]))
    return d - a[5] - b[5]


_KIND_ORDER = {"circle": 0, "rect": 1, "stadium": 2}
