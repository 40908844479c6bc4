"""Signed-distance queries, a BVH-backed collision world and robot collision checks.

Distances are signed in metres (negative inside a solid). Mesh triangles have
no inside, so their distance is unsigned. A robot configuration is in
collision when any of its spheres comes closer than ``margin`` to the world
(strict ``<``), or when two spheres on non-ignored link pairs overlap.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .geometry import Cuboid, closest_point_on_triangles
from .robot import (
    AttachedObject,
    RobotDescription,
    forward_kinematics_batch,
    sphere_centers,
    sphere_centers_batch,
)

DEFAULT_MARGIN = 0.01
EMPTY_DISTANCE = np.inf
GRID_CELL = 0.02
GRID_PAD = 0.3  # points outside the padded grid are at least this far from the world
GRID_MAX_CELLS = 4_000_000
BRUTE_FORCE_PAIRS = 4096  # candidate-primitive pairs below which the BVH is skipped


def sdf_point_sphere(x, center, radius: float):
    """``||x - center|| - radius``; ``x`` may be a single point or ``(n, 3)``."""
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1) - radius


def _box_sdf_local(local: np.ndarray, half: np.ndarray) -> np.ndarray:
    d = np.abs(local) - half
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
    inside = np.minimum(np.max(d, axis=-1), 0.0)
    return outside + inside


def sdf_point_box(x, box: Cuboid):
    """Exact signed distance from ``x`` (point or ``(n, 3)``) to an oriented box."""
    x = np.asarray(x, dtype=float)
    local = (x - box.center) @ box.rotation
    return _box_sdf_local(local, box.half_extents)


# ----------------------------------------------------------------------------
# bounding volume hierarchy


class BVH:
    """Binary AABB tree, median split on the widest centroid axis.

    Stored as flat arrays; leaf ``k`` owns ``order[start[k]:start[k] + count[k]]``.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray, leaf_size: int = 4):
        self.leaf_size = leaf_size
        n = len(lo)
        self.order = np.arange(n)
        node_lo, node_hi, left, right, start, count = [], [], [], [], [], []
        if n == 0:
            self.node_lo = np.empty((0, 3))
            self.node_hi = np.empty((0, 3))
            self.left = self.right = self.start = self.count = np.empty(0, dtype=int)
            return
        centroid = 0.5 * (lo + hi)
        order = self.order

        def build(a: int, b: int) -> int:
            idx = order[a:b]
            k = len(node_lo)
            node_lo.append(lo[idx].min(axis=0))
            node_hi.append(hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(a)
            count.append(b - a)
            if b - a > leaf_size:
                c = centroid[idx]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                srt = idx[np.argsort(c[:, axis], kind="stable")]
                order[a:b] = srt
                mid = a + (b - a) // 2
                left[k] = build(a, mid)
                right[k] = build(mid, b)
                count[k] = 0
            return k

        build(0, n)
        self.node_lo = np.array(node_lo)
        self.node_hi = np.array(node_hi)
        self.left = np.array(left)
        self.right = np.array(right)
        self.start = np.array(start)
        self.count = np.array(count)

    def __len__(self) -> int:
        return len(self.order)

    def leaf_members(self, node: int) -> np.ndarray:
        return self.order[self.start[node] : self.start[node] + self.count[node]]

    def aabb_distance(self, nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
        d = np.maximum(np.maximum(self.node_lo[nodes] - points, 0.0), points - self.node_hi[nodes])
        return np.linalg.norm(d, axis=-1)


# ----------------------------------------------------------------------------
# collision world


@dataclass(eq=False)
class CollisionWorld:
    """Immutable bag of cuboids and triangles with a BVH over both.

    Primitive ids ``[0, n_cuboids)`` are cuboids; the rest index ``triangles``.
    """

    cuboids: list = field(default_factory=list)
    triangles: np.ndarray = field(default_factory=lambda: np.empty((0, 3, 3)))
    margin: float = DEFAULT_MARGIN
    leaf_size: int = 4

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("collision margin must be positive")
        self.triangles = np.asarray(self.triangles, dtype=float).reshape(-1, 3, 3)
        nc = len(self.cuboids)
        self._box_center = np.array([c.center for c in self.cuboids]).reshape(nc, 3)
        self._box_rot = np.array([c.rotation for c in self.cuboids]).reshape(nc, 3, 3)
        self._box_half = np.array([c.half_extents for c in self.cuboids]).reshape(nc, 3)
        lo, hi = [], []
        for c in self.cuboids:
            a, b = c.aabb()
            lo.append(a)
            hi.append(b)
        if len(self.triangles):
            lo.extend(self.triangles.min(axis=1))
            hi.extend(self.triangles.max(axis=1))
        lo = np.array(lo).reshape(-1, 3)
        hi = np.array(hi).reshape(-1, 3)
        self.bvh = BVH(lo, hi, self.leaf_size)
        self._build_grid(lo, hi)

    def _build_grid(self, lo: np.ndarray, hi: np.ndarray):
        """Distance transform over cells touched by any primitive, used as a lower bound.

        A cuboid marks the cells whose centre lies within half a cell diagonal of
        it; a triangle marks every cell of its AABB. Every cell meeting a
        primitive is therefore marked, so for a point in cell ``c``
        ``edt[c] - cell_diagonal`` never exceeds its true distance to the world.
        """
        self._grid = None
        if len(lo) == 0:
            return
        h = GRID_CELL
        g_lo = lo.min(axis=0) - GRID_PAD
        g_hi = hi.max(axis=0) + GRID_PAD
        while np.prod(np.ceil((g_hi - g_lo) / h)) > GRID_MAX_CELLS:
            h *= 1.25
        shape = np.ceil((g_hi - g_lo) / h).astype(int)
        occ = np.zeros(shape, dtype=bool)
        half_diag = 0.5 * np.sqrt(3.0) * h
        a = np.clip(np.floor((lo - g_lo) / h).astype(int), 0, shape - 1)
        b = np.clip(np.floor((hi - g_lo) / h).astype(int) + 1, 1, shape)
        nc = len(self.cuboids)
        for k, ((x0, y0, z0), (x1, y1, z1)) in enumerate(zip(a, b)):
            if k >= nc:
                occ[x0:x1, y0:y1, z0:z1] = True
                continue
            axes = [g_lo[i] + h * (np.arange(lo_i, hi_i) + 0.5) for i, (lo_i, hi_i) in enumerate(((x0, x1), (y0, y1), (z0, z1)))]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
            local = (pts - self._box_center[k]) @ self._box_rot[k]
            near = _box_sdf_local(local, np.broadcast_to(self._box_half[k], local.shape)) <= half_diag
            occ[x0:x1, y0:y1, z0:z1] |= near.reshape(x1 - x0, y1 - y0, z1 - z0)
        self._grid = distance_transform_edt(~occ, sampling=h) - 2.0 * half_diag
        self._grid_lo, self._grid_h = g_lo, h

    def distance_lower_bound(self, points: np.ndarray) -> np.ndarray:
        """Cheap lower bound on each point's unsigned distance to the nearest primitive."""
        points = np.atleast_2d(points)
        if self._grid is None:
            return np.full(len(points), -np.inf if not self.empty else np.inf)
        idx = np.floor((points - self._grid_lo) / self._grid_h).astype(int)
        inside = np.all((idx >= 0) & (idx < self._grid.shape), axis=1)
        out = np.full(len(points), GRID_PAD)
        i = idx[inside]
        out[inside] = self._grid[i[:, 0], i[:, 1], i[:, 2]]
        return out

    @property
    def n_primitives(self) -> int:
        return len(self.cuboids) + len(self.triangles)

    @property
    def empty(self) -> bool:
        return self.n_primitives == 0

    def primitive_distance(self, points: np.ndarray, prims: np.ndarray) -> np.ndarray:
        """Row-paired distance from ``points[k]`` to primitive ``prims[k]``."""
        points = np.atleast_2d(points)
        out = np.empty(len(prims))
        nc = len(self.cuboids)
        is_box = prims < nc
        if np.any(is_box):
            b = prims[is_box]
            local = np.einsum("nij,ni->nj", self._box_rot[b], points[is_box] - self._box_center[b])
            out[is_box] = _box_sdf_local(local, self._box_half[b])
        if not np.all(is_box):
            t = self.triangles[prims[~is_box] - nc]
            p = points[~is_box]
            cp = closest_point_on_triangles(p, t[:, 0], t[:, 1], t[:, 2])
            out[~is_box] = np.linalg.norm(p - cp, axis=1)
        return out

    # -- queries --------------------------------------------------------

    def min_distance_sphere(self, center, radius: float) -> float:
        """Best-first BVH search for ``min_prim dist(center, prim) - radius``."""
        if self.empty:
            return EMPTY_DISTANCE
        center = np.asarray(center, dtype=float)
        bvh = self.bvh
        best = np.inf
        heap = [(0.0, 0)]
        while heap:
            bound, node = heapq.heappop(heap)
            if bound > 0.0 and bound - radius >= best:
                break
            if bvh.count[node] > 0:
                members = bvh.leaf_members(node)
                d = self.primitive_distance(np.repeat(center[None], len(members), axis=0), members)
                best = min(best, float(d.min()) - radius)
                continue
            kids = np.array([bvh.left[node], bvh.right[node]])
            kd = bvh.aabb_distance(kids, center[None])
            for k, dk in zip(kids, kd):
                if dk <= 0.0 or dk - radius < best:
                    heapq.heappush(heap, (float(dk), int(k)))
        return best

    def spheres_within(self, centers: np.ndarray, radii: np.ndarray, threshold: float) -> np.ndarray:
        """Boolean per sphere: does any primitive lie closer than ``threshold``?

        Batched level-synchronous BVH traversal; a node is pruned when its AABB
        distance minus the sphere radius is already ``>= threshold``.
        """
        centers = np.atleast_2d(centers)
        hit = np.zeros(len(centers), dtype=bool)
        if self.empty or len(centers) == 0:
            return hit
        q = np.where(self.distance_lower_bound(centers) - radii < threshold)[0]
        if len(q) * self.n_primitives <= BRUTE_FORCE_PAIRS:
            # few candidates against few primitives: one vectorised pass beats the traversal
            pq = np.repeat(q, self.n_primitives)
            pp = np.tile(np.arange(self.n_primitives), len(q))
            d = self.primitive_distance(centers[pq], pp) - radii[pq]
            hit[pq[d < threshold]] = True
            return hit
        bvh = self.bvh
        nodes = np.zeros(len(q), dtype=int)
        pq, pp = [], []
        while len(q):
            d = bvh.aabb_distance(nodes, centers[q])
            keep = d - radii[q] < threshold
            q, nodes = q[keep], nodes[keep]
            leaf = bvh.count[nodes] > 0
            for node in np.unique(nodes[leaf]):
                members = bvh.leaf_members(node)
                qs = q[leaf & (nodes == node)]
                pq.append(np.repeat(qs, len(members)))
                pp.append(np.tile(members, len(qs)))
            inner = ~leaf
            q_in, n_in = q[inner], nodes[inner]
            q = np.concatenate([q_in, q_in])
            nodes = np.concatenate([bvh.left[n_in], bvh.right[n_in]])
        if pq:
            pq = np.concatenate(pq)
            pp = np.concatenate(pp)
            d = self.primitive_distance(centers[pq], pp) - radii[pq]
            hit[pq[d < threshold]] = True
        return hit

    def min_distance_spheres(self, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
        return np.array([self.min_distance_sphere(c, r) for c, r in zip(centers, radii)])


def min_distance_sphere_world(center, radius: float, world: CollisionWorld) -> float:
    """Signed clearance of a sphere against the world (``+inf`` for an empty world)."""
    return world.min_distance_sphere(center, radius)


# ----------------------------------------------------------------------------
# robot checks


def _attachment_mask(robot: RobotDescription, attached: AttachedObject | None):
    """Sphere pairs (robot sphere, attachment sphere) to test for self-collision."""
    if attached is None:
        return None
    n_obj = len(attached.cover[1])
    li = robot.spheres.link_index
    rob = np.where(~np.isin(li, list(robot.attachment_ignore)))[0]
    n = len(li)
    ii = np.repeat(rob, n_obj)
    jj = np.tile(np.arange(n, n + n_obj), len(rob))
    return ii, jj


class CollisionChecker:
    """Robot-versus-world and self-collision checks for one robot, world and attachment."""

    def __init__(self, robot: RobotDescription, world: CollisionWorld, attached: AttachedObject | None = None):
        self.robot = robot
        self.world = world
        self.attached = attached
        ii, jj = robot.self_collision_pairs
        extra = _attachment_mask(robot, attached)
        if extra is not None:
            ii = np.concatenate([ii, extra[0]])
            jj = np.concatenate([jj, extra[1]])
        self._pairs = (ii, jj)
        self.n_checks = 0

    @property
    def margin(self) -> float:
        return self.world.margin

    def spheres(self, qs: np.ndarray):
        frames = forward_kinematics_batch(self.robot.chain, qs)
        return sphere_centers_batch(self.robot.chain, self.robot.spheres, frames, self.attached)

    def self_collision_batch(self, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
        ii, jj = self._pairs
        d = centers[:, ii] - centers[:, jj]
        reach = radii[ii] + radii[jj]
        return np.any(np.einsum("bpk,bpk->bp", d, d) < reach * reach, axis=1)

    def configs_in_collision(self, qs, margin: float | None = None) -> np.ndarray:
        """Per-configuration collision flags for a ``(B, 7)`` batch."""
        qs = np.atleast_2d(qs)
        self.n_checks += len(qs)
        margin = self.margin if margin is None else margin
        centers, radii = self.spheres(qs)
        B, n = centers.shape[:2]
        hit = self.world.spheres_within(centers.reshape(-1, 3), np.tile(radii, B), margin).reshape(B, n).any(axis=1)
        rest = ~hit
        if np.any(rest):
            hit[rest] = self.self_collision_batch(centers[rest], radii)
        return hit

    def config_in_collision(self, q, margin: float | None = None) -> bool:
        return bool(self.configs_in_collision(np.asarray(q, dtype=float)[None], margin)[0])

    def motion_in_collision(self, q_a, q_b, resolution: float = 0.05, margin: float | None = None) -> bool:
        qs = interpolate_configs(q_a, q_b, resolution)
        # endpoints first: cheap rejection for most invalid edges
        order = np.concatenate([[0, len(qs) - 1], np.arange(1, len(qs) - 1)]) if len(qs) > 2 else np.arange(len(qs))
        qs = qs[order]
        for k in range(0, len(qs), 32):
            if np.any(self.configs_in_collision(qs[k : k + 32], margin)):
                return True
        return False

    def first_collision(self, qs, margin: float | None = None, chunk: int = 64) -> int:
        """Index of the first colliding configuration in ``qs`` (checked in order), or -1."""
        qs = np.atleast_2d(qs)
        for k in range(0, len(qs), chunk):
            hit = np.flatnonzero(self.configs_in_collision(qs[k : k + chunk], margin))
            if len(hit):
                return k + int(hit[0])
        return -1

    def path_in_collision(self, waypoints, resolution: float = 0.05, margin: float | None = None) -> bool:
        return any(
            self.motion_in_collision(a, b, resolution, margin) for a, b in zip(waypoints[:-1], waypoints[1:])
        )


def interpolate_configs(q_a, q_b, resolution: float) -> np.ndarray:
    """Configurations from ``q_a`` to ``q_b`` (inclusive) with max-norm steps <= ``resolution``."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    dist = float(np.max(np.abs(q_b - q_a)))
    n = max(1, int(np.ceil(dist / resolution)))
    # each half is measured from its own end, so reversing the edge gives the same configurations
    k = np.arange(n + 1)
    near_a = 2 * k < n
    qs = np.where(near_a[:, None], q_a + (k / n)[:, None] * (q_b - q_a), q_b + ((n - k) / n)[:, None] * (q_a - q_b))
    if n % 2 == 0:
        qs[n // 2] = 0.5 * (q_a + q_b)
    qs[0], qs[-1] = q_a, q_b
    return qs


def config_in_collision(robot: RobotDescription, q, world: CollisionWorld, attached=None) -> bool:
    robot.chain.check_limits(q)
    return CollisionChecker(robot, world, attached).config_in_collision(q)


def motion_in_collision(robot: RobotDescription, q_a, q_b, world: CollisionWorld, attached=None, resolution: float = 0.05) -> bool:
    return CollisionChecker(robot, world, attached).motion_in_collision(q_a, q_b, resolution)


# ----------------------------------------------------------------------------
# point clouds against the sphere model


def robot_min_sdf(robot: RobotDescription, q, points, attached=None) -> np.ndarray:
    """Minimum sphere SDF of each point against the robot (and attachment) at ``q``."""
    centers, radii = sphere_centers(robot.chain, robot.spheres, q, attached, check_limits=False)
    return min_sdf(np.asarray(points, dtype=float).reshape(-1, 3), centers, radii)


def min_sdf(points: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return np.empty(0)
    return (cdist(points, centers) - radii[None, :]).min(axis=1)


def segment_robot_points(cloud, robot: RobotDescription, q, attached=None, eps: float = 0.01) -> np.ndarray:
    """Drop points whose robot-sphere SDF is below ``eps``; order preserved."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    return cloud[robot_min_sdf(robot, q, cloud, attached) >= eps]


def cloud_collision_count(robot: RobotDescription, q, obstacle_cloud, attached=None, eps: float = 0.01) -> int:
    """Number of cloud points with robot-sphere SDF strictly below ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cloud = np.asarray(obstacle_cloud, dtype=float).reshape(-1, 3)
    return int(np.count_nonzero(robot_min_sdf(robot, q, cloud, attached) < eps))


class CloudIndex:
    """KD-tree over an obstacle cloud for repeated sphere-model collision counts.

    Candidate points come from a ball query of radius ``r + eps``; the count
    then applies the exact ``< eps`` test, so results equal the dense count.
    """

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.tree = cKDTree(self.points) if len(self.points) else None

    def count_batch(self, centers: np.ndarray, radii: np.ndarray, eps: float) -> np.ndarray:
        """Collision counts for a ``(B, n, 3)`` stack of sphere centres."""
        B = centers.shape[0]
        out = np.zeros(B, dtype=int)
        if self.tree is None:
            return out
        flat = centers.reshape(-1, 3)
        rr = np.tile(radii, B) + eps
        hits = self.tree.query_ball_point(flat, rr)
        n = len(radii)
        for b in range(B):
            cand = [h for h in hits[b * n : (b + 1) * n] if h]
            if not cand:
                continue
            idx = np.unique(np.concatenate(cand))
            out[b] = int(np.count_nonzero(min_sdf(self.points[idx], centers[b], radii) < eps))
        return out
