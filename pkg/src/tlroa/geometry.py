"""Closed-polyline utilities. Polygons are ``(n, 2)`` arrays without the closing repeat."""

from __future__ import annotations

import numpy as np


def _edges(poly: np.ndarray):
    a = np.asarray(poly, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    return a, b


def area(poly: np.ndarray) -> float:
    """Unsigned shoelace area."""
    return abs(signed_area(poly))


def signed_area(poly: np.ndarray) -> float:
    a, b = _edges(poly)
    return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))


def perimeter(poly: np.ndarray) -> float:
    a, b = _edges(poly)
    return float(np.sum(np.hypot(*(b - a).T)))


def edge_distance(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest polygon edge."""
    a, b = _edges(poly)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0, 1.0, dd)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        s = np.clip(np.einsum("ij,ij->i", p - a, d) / dd, 0.0, 1.0)
        proj = a + s[:, None] * d
        out[i] = np.sqrt(np.min(np.einsum("ij,ij->i", p - proj, p - proj)))
    return out


def points_in_polygon(poly: np.ndarray, points: np.ndarray, edge_tol: float = 0.0) -> np.ndarray:
    """Even-odd ray casting; points within ``edge_tol`` of an edge count as inside."""
    a, b = _edges(poly)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    inside = np.zeros(len(pts), dtype=bool)
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    for i, (px, py) in enumerate(pts):
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (py - ay) * (bx - ax) / (by - ay)
        inside[i] = np.count_nonzero(straddle & (px < xcross)) % 2 == 1
    if edge_tol > 0:
        inside |= edge_distance(poly, pts) <= edge_tol
    return inside


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_simple(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges properly intersect."""
    a, b = _edges(poly)
    n = len(a)
    if n < 4:
        return n == 3
    for i in range(n - 2):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        hit = _segments_cross(a[i], b[i], a[j], b[j])
        if np.any(hit):
            return False
    return True


def outward_normals(poly: np.ndarray) -> np.ndarray:
    """Unit outward normal of each edge (edge ``i`` runs from vertex ``i`` to ``i+1``)."""
    a, b = _edges(poly)
    d = b - a
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    if signed_area(poly) < 0:
        n = -n
    return n
