"""Primitive geometry: oriented cuboids, surface sampling, point-triangle distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms as tf

_CORNER_SIGNS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Oriented box: world ``pose`` of its centre and strictly positive half extents."""

    pose: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or np.any(h <= 0):
            raise ValueError(f"cuboid half extents must be 3 positive values, got {h}")
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "pose", np.asarray(self.pose, dtype=float))

    @property
    def center(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    def corners(self) -> np.ndarray:
        return tf.apply(self.pose, _CORNER_SIGNS * self.half_extents)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.abs(self.rotation) @ self.half_extents
        return self.center - r, self.center + r

    def moved(self, T: np.ndarray) -> "Cuboid":
        """The cuboid after left-multiplying its pose by ``T``."""
        return Cuboid(T @ self.pose, self.half_extents)

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        local = tf.apply(tf.invert(self.pose), np.atleast_2d(points))
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)

    def face_areas(self) -> np.ndarray:
        hx, hy, hz = self.half_extents
        a = np.array([4 * hy * hz, 4 * hx * hz, 4 * hx * hy])
        return np.repeat(a, 2)

    def __eq__(self, other):
        return (
            isinstance(other, Cuboid)
            and np.array_equal(self.pose, other.pose)
            and np.array_equal(self.half_extents, other.half_extents)
        )

    __hash__ = None


def box(center, half_extents, yaw: float = 0.0) -> Cuboid:
    return Cuboid(tf.make_transform(tf.rot_z(yaw), np.asarray(center, dtype=float)), np.asarray(half_extents, dtype=float))


def sample_box_surface(half: np.ndarray, n: int, rng, return_faces: bool = False):
    """Area-uniform samples on the surface of an origin-centred box.

    Faces are indexed ``2*axis + (0 for -, 1 for +)``.
    """
    hx, hy, hz = half
    areas = np.repeat([hy * hz, hx * hz, hx * hy], 2)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    if return_faces:
        return pts, face
    return pts


def triangle_areas(tri: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


def sample_triangles(tri: np.ndarray, n: int, rng, return_index: bool = False):
    """Area-uniform samples over a triangle soup of shape ``(m, 3, 3)``."""
    areas = triangle_areas(tri)
    idx = rng.choice(len(tri), size=n, p=areas / areas.sum())
    u, v = rng.uniform(size=n), rng.uniform(size=n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    t = tri[idx]
    pts = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])
    if return_index:
        return pts, idx
    return pts


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest points on triangles ``(a, b, c)`` to points ``p``; all arrays ``(n, 3)``.

    Region-based method (Ericson, Real-Time Collision Detection, 5.1.5),
    vectorised over rows.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim == 2 else value
        done[:] |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        put((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def point_triangle_distance(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Unsigned distances from points ``(n, 3)`` to triangles ``(n, 3, 3)`` (row-paired)."""
    cp = closest_point_on_triangles(p, tri[:, 0], tri[:, 1], tri[:, 2])
    return np.linalg.norm(p - cp, axis=1)
