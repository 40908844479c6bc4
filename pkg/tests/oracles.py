"""Brute-force reference implementations used only by the tests.

They share no code with the package: plain loops, textbook formulas and
scipy's convex hulls.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull


def sphere_sdf(x, c, r) -> float:
    return math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(x, c))) - r


def box_sdf(x, center, R, half) -> float:
    """Oriented box SDF via clamping in the box frame (outside) and face distance (inside)."""
    d = [float(np.dot(np.asarray(x) - center, R[:, k])) for k in range(3)]
    clamped = [min(max(d[k], -half[k]), half[k]) for k in range(3)]
    outside = math.sqrt(sum((d[k] - clamped[k]) ** 2 for k in range(3)))
    if outside > 0:
        return outside
    return -min(half[k] - abs(d[k]) for k in range(3))


def cloud_count(points, centers, radii, eps) -> int:
    """Points whose minimum sphere SDF is below ``eps``."""
    n = 0
    for p in points:
        best = min(sphere_sdf(p, c, r) for c, r in zip(centers, radii))
        if best < eps:
            n += 1
    return n


def trajectory_score(per_waypoint_spheres, points, eps) -> int:
    """Triple loop: waypoints x points x spheres."""
    total = 0
    for centers, radii in per_waypoint_spheres:
        for p in points:
            hit = False
            for c, r in zip(centers, radii):
                if sphere_sdf(p, c, r) < eps:
                    hit = True
                    break
            total += hit
    return total


def dh_panda_flange(q) -> np.ndarray:
    """Panda flange pose from the manufacturer's modified DH table."""
    a = [0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088]
    d = [0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0]
    alpha = [0.0, -math.pi / 2, math.pi / 2, math.pi / 2, -math.pi / 2, math.pi / 2, math.pi / 2]
    T = np.eye(4)
    for i in range(7):
        ca, sa = math.cos(alpha[i]), math.sin(alpha[i])
        ct, st = math.cos(q[i]), math.sin(q[i])
        A = np.array(
            [
                [ct, -st, 0.0, a[i]],
                [st * ca, ct * ca, -sa, -d[i] * sa],
                [st * sa, ct * sa, ca, d[i] * ca],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        T = T @ A
    F = np.eye(4)
    F[2, 3] = 0.107
    return T @ F


def box_corners(center, R, half) -> np.ndarray:
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return center + (signs * half) @ R.T


def minkowski_penetration(corners_a, corners_b) -> float:
    """Penetration depth of two convex polytopes from the hull of A - B.

    Positive: the shortest translation that separates them. Negative or zero:
    the polytopes are apart (value is minus the distance from the origin to the
    hull when the origin is outside, which is the gap).
    """
    diff = (corners_a[:, None, :] - corners_b[None, :, :]).reshape(-1, 3)
    hull = ConvexHull(diff)
    eq = hull.equations  # n . x + off <= 0 inside, n unit
    s = -eq[:, 3]  # signed distance from origin to each facet plane (positive if origin inside)
    if np.all(s >= 0):
        return float(s.min())
    # origin outside: distance to the hull surface, computed on the point set's hull facets
    return -float(_outside_distance(diff, hull))


def _outside_distance(points, hull) -> float:
    best = np.inf
    for simplex in hull.simplices:
        tri = points[simplex]
        best = min(best, _point_triangle(np.zeros(3), tri))
    return best


def _point_triangle(p, tri) -> float:
    """Distance from a point to a triangle by dense barycentric enumeration plus edges."""
    a, b, c = tri
    n = np.cross(b - a, c - a)
    nn = np.dot(n, n)
    if nn > 1e-18:
        # projection inside the triangle?
        t = np.dot(p - a, n) / nn
        proj = p - t * n
        v0, v1, v2 = b - a, c - a, proj - a
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        d20, d21 = v2 @ v0, v2 @ v1
        den = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        if v >= 0 and w >= 0 and v + w <= 1:
            return float(np.linalg.norm(p - proj))
    return min(_point_segment(p, a, b), _point_segment(p, b, c), _point_segment(p, c, a))


def _point_segment(p, a, b) -> float:
    ab = b - a
    t = 0.0 if ab @ ab == 0 else min(1.0, max(0.0, float((p - a) @ ab / (ab @ ab))))
    return float(np.linalg.norm(p - (a + t * ab)))


def point_triangle_distance(p, tri) -> float:
    return _point_triangle(np.asarray(p, dtype=float), np.asarray(tri, dtype=float))
