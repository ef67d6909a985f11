"""Planar polygon utilities shared by the spatial and node-space layers.

Containment uses the even-odd (ray casting) rule with points on a polygon
edge counted as inside, which gives a deterministic tie-break for cells
sitting on shared region borders.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def _on_segment(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> bool:
    """True if point p lies on the closed segment a-b."""
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    seg_len = max(abs(bx - ax), abs(by - ay), 1.0)
    if abs(cross) > _EPS * seg_len:
        return False
    if min(ax, bx) - _EPS <= px <= max(ax, bx) + _EPS and min(ay, by) - _EPS <= py <= max(ay, by) + _EPS:
        return True
    return False


def point_in_ring(x: float, y: float, ring: np.ndarray) -> bool:
    """Even-odd containment of (x, y) in a single closed ring.

    ``ring`` is an (n, 2) array; the closing vertex may be present or not.
    Boundary points count as inside.
    """
    ring = np.asarray(ring, dtype=float)
    if len(ring) >= 2 and np.allclose(ring[0], ring[-1]):
        ring = ring[:-1]
    n = len(ring)
    inside = False
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        if _on_segment(x, y, ax, ay, bx, by):
            return True
        # edge crossing test for a ray going in +x direction
        if (ay > y) != (by > y):
            t = (y - ay) / (by - ay)
            xi = ax + t * (bx - ax)
            if xi > x:
                inside = not inside
    return inside


def point_in_polygon(x: float, y: float, rings: list[np.ndarray]) -> bool:
    """Even-odd containment over all rings of one polygon.

    With exterior/hole ring lists this naturally treats hole interiors as
    outside (two crossings cancel).
    """
    count = 0
    for ring in rings:
        r = np.asarray(ring, dtype=float)
        if len(r) >= 2 and np.allclose(r[0], r[-1]):
            r = r[:-1]
        n = len(r)
        for i in range(n):
            ax, ay = r[i]
            bx, by = r[(i + 1) % n]
            if _on_segment(x, y, ax, ay, bx, by):
                return True
            if (ay > y) != (by > y):
                t = (y - ay) / (by - ay)
                xi = ax + t * (bx - ax)
                if xi > x:
                    count += 1
    return count % 2 == 1


def point_in_region(x: float, y: float, polygons: list[list[np.ndarray]]) -> bool:
    """Containment in a region given as a list of (multi-ring) polygons."""
    return any(point_in_polygon(x, y, rings) for rings in polygons)


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Vectorized wrapper: boolean mask of points inside a single ring."""
    pts = np.asarray(points, dtype=float)
    return np.array([point_in_ring(px, py, ring) for px, py in pts], dtype=bool)


def segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of open segments p1-p2 and p3-p4.

    Shared endpoints do not count; used for self-intersection checks of
    annotation polygons.
    """
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > _EPS:
            return 1
        if v < -_EPS:
            return -1
        return 0

    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def polygon_self_intersects(vertices: np.ndarray) -> bool:
    """Check a simple closed polygon (vertex list without closing repeat)."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            b1, b2 = v[j], v[(j + 1) % n]
            if segments_intersect(a1, a2, b1, b2):
                return True
    return False


def convex_hull(points: np.ndarray) -> np.ndarray | None:
    """Convex hull vertices in counter-clockwise order, or None if the
    input has fewer than 3 points (or is degenerate)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return None
    try:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(pts)
    except Exception:
        return None
    return pts[hull.vertices]
