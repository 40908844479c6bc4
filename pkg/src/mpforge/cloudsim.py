"""Synthetic segmented point clouds.

Obstacle points are sampled from the exact scene geometry. Robot and goal
points are sampled from the sphere model: a fixed template of points on the
surface of each link's spheres, expressed in link frames, is moved by forward
kinematics and filtered to the outer surface of the posed sphere union.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path as FsPath

import numpy as np

from . import transforms as tf
from .collision import CollisionWorld, min_sdf, segment_robot_points
from .geometry import triangle_areas
from .rng import make_rng
from .robot import AttachedObject, RobotDescription, forward_kinematics, sphere_centers_batch

N_ROBOT = 2048
N_OBSTACLE = 4096
SEGMENT_EPS = 0.01
LABELS = {"robot": 0, "goal": 1, "obstacle": 2}


class EmptyWorldWarning(UserWarning):
    pass


# ----------------------------------------------------------------------------
# scene surface


def _face_frames():
    """Per face ``2*axis + side``: outward normal and the two in-plane axes."""
    out = []
    for axis in range(3):
        for side in (0, 1):
            n = np.zeros(3)
            n[axis] = 1.0 if side else -1.0
            out.append((axis, n, [k for k in range(3) if k != axis]))
    return out


_FACES = _face_frames()


def sample_world_surface(world: CollisionWorld, n: int, rng, return_details: bool = False):
    """``n`` points drawn area-proportionally over cuboid faces and mesh triangles.

    With ``return_details`` also returns the primitive id of each point (ids as
    in the world), the cuboid face index (``-1`` for triangles) and the
    outward normal (triangle normals follow the vertex winding).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 0 and world.empty:
        warnings.warn("sampling the surface of an empty world", EmptyWorldWarning, stacklevel=2)
    if n == 0 or world.empty:
        e = np.empty((0, 3))
        return (e, np.empty(0, dtype=int), np.empty(0, dtype=int), e) if return_details else e
    nc = len(world.cuboids)
    half = world._box_half
    face_area = np.stack([4 * half[:, 1] * half[:, 2], 4 * half[:, 0] * half[:, 2], 4 * half[:, 0] * half[:, 1]], axis=1)
    face_area = np.repeat(face_area, 2, axis=1).reshape(-1)  # (nc*6,)
    tri_area = triangle_areas(world.triangles) if len(world.triangles) else np.empty(0)
    areas = np.concatenate([face_area, tri_area])
    pick = rng.choice(len(areas), size=n, p=areas / areas.sum())
    pts = np.empty((n, 3))
    normals = np.empty((n, 3))
    prim = np.empty(n, dtype=int)
    face = np.full(n, -1, dtype=int)
    is_face = pick < nc * 6
    if np.any(is_face):
        k = pick[is_face]
        box, f = k // 6, k % 6
        h = half[box]
        local = rng.uniform(-1.0, 1.0, size=(len(k), 3)) * h
        axis = f // 2
        sign = np.where(f % 2 == 1, 1.0, -1.0)
        rows = np.arange(len(k))
        local[rows, axis] = sign * h[rows, axis]
        R = world._box_rot[box]
        pts[is_face] = np.einsum("nij,nj->ni", R, local) + world._box_center[box]
        nl = np.zeros((len(k), 3))
        nl[rows, axis] = sign
        normals[is_face] = np.einsum("nij,nj->ni", R, nl)
        prim[is_face] = box
        face[is_face] = f
    if np.any(~is_face):
        t = pick[~is_face] - nc * 6
        tri = world.triangles[t]
        u, v = rng.uniform(size=(2, len(t)))
        flip = u + v > 1
        u, v = np.where(flip, 1 - u, u), np.where(flip, 1 - v, v)
        pts[~is_face] = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
        nn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        normals[~is_face] = nn / np.maximum(np.linalg.norm(nn, axis=1, keepdims=True), 1e-300)
        prim[~is_face] = nc + t
    if return_details:
        return pts, prim, face, normals
    return pts


DEFAULT_CAMERAS = np.array([[1.6, 0.0, 1.0], [0.4, 1.4, 1.0], [0.4, -1.4, 1.0], [-0.6, 0.0, 1.4]])


def visible_points(points, normals, prim, n_cuboids: int, cameras=DEFAULT_CAMERAS) -> np.ndarray:
    """Back-face culling mask: cuboid points whose face looks toward at least one camera.

    Triangle points are two-sided and always kept. No occlusion is modelled.
    """
    keep = prim >= n_cuboids
    to_cam = cameras[None, :, :] - points[:, None, :]
    facing = np.einsum("nd,ncd->nc", normals, to_cam) > 0
    return keep | facing.any(axis=1)


def scene_cloud(world: CollisionWorld, n: int, rng, noise_std: float = 0.0, partial: bool = False, cameras=None):
    """Full scene cloud for observation assembly, with optional noise and back-face culling."""
    if not partial:
        pts = sample_world_surface(world, n, rng)
    else:
        pts, prim, _, nrm = sample_world_surface(world, n, rng, return_details=True)
        cams = DEFAULT_CAMERAS if cameras is None else np.asarray(cameras, dtype=float)
        pts = pts[visible_points(pts, nrm, prim, len(world.cuboids), cams)]
    if noise_std > 0:
        pts = pts + rng.normal(0.0, noise_std, pts.shape)
    return pts


# ----------------------------------------------------------------------------
# robot surface


@dataclass(frozen=True, eq=False)
class RobotTemplate:
    """Surface points of every sphere in its link's frame.

    Points strictly inside another sphere of the same link are dropped, so
    each link carries the outer surface of its own sphere union.
    """

    robot: RobotDescription
    local: np.ndarray  # (M, 3) link-frame coordinates
    link: np.ndarray  # (M,)
    sphere: np.ndarray  # (M,)

    @classmethod
    def build(cls, robot: RobotDescription, n: int = 8 * N_ROBOT, seed: int = 0) -> "RobotTemplate":
        rng = make_rng(seed, 104)
        sp = robot.spheres
        area = sp.radii**2
        idx = np.sort(rng.choice(len(area), size=n, p=area / area.sum()))
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        local = sp.offsets[idx] + sp.radii[idx, None] * d
        link = sp.link_index[idx]
        keep = np.ones(n, dtype=bool)
        for li in np.unique(link):
            m = link == li
            own = np.where(sp.link_index == li)[0]
            dist = np.linalg.norm(local[m][:, None] - sp.offsets[own][None], axis=2) - sp.radii[own][None]
            dist[idx[m][:, None] == own[None]] = np.inf
            keep[m] = dist.min(axis=1) >= 0
        return cls(robot, local[keep], link[keep], idx[keep])

    def posed(self, q, check_limits: bool = True) -> np.ndarray:
        F = forward_kinematics(self.robot.chain, q, check_limits)
        T = F[self.link]
        return np.einsum("nij,nj->ni", T[:, :3, :3], self.local) + T[:, :3, 3]


_TEMPLATES: dict = {}


def robot_template(robot: RobotDescription, n: int = 8 * N_ROBOT) -> RobotTemplate:
    key = (id(robot), n)
    tpl = _TEMPLATES.get(key)
    if tpl is None or tpl.robot is not robot:
        tpl = RobotTemplate.build(robot, n)
        _TEMPLATES[key] = tpl
    return tpl


def _attachment_surface(robot, q, attached: AttachedObject, n: int, rng) -> np.ndarray:
    F = forward_kinematics(robot.chain, q)
    T = F[-1] @ robot.chain.ee_offset @ attached.grasp_offset
    return tf.apply(T, attached.surface_points(n, rng))


def _attachment_area(attached: AttachedObject) -> float:
    e = attached.extents()
    if attached.kind == "sphere":
        return float(4 * np.pi * attached.dims[0] ** 2)
    if attached.kind == "cylinder":
        r, h = attached.dims
        return float(2 * np.pi * r * h + 2 * np.pi * r * r)
    if attached.kind == "mesh":
        return float(triangle_areas(attached.vertices[attached.faces]).sum())
    return float(2 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]))


def robot_cloud(
    robot: RobotDescription,
    q,
    attached: AttachedObject | None = None,
    n: int = N_ROBOT,
    rng=None,
    template: RobotTemplate | None = None,
    return_index: bool = False,
):
    """``n`` points on the outer surface of the posed sphere model, plus held-object surface points.

    With ``return_index`` also returns the template index of each robot point
    (``-1`` for held-object points).
    """
    rng = make_rng(0) if rng is None else rng
    tpl = robot_template(robot) if template is None else template
    q = np.asarray(q, dtype=float)
    pts = tpl.posed(q)
    frames = forward_kinematics(robot.chain, q)[None]
    centers, radii = sphere_centers_batch(robot.chain, robot.spheres, frames)
    outer = min_sdf(pts, centers[0], radii) >= -1e-9
    cand = np.where(outer)[0]
    n_obj = 0
    if attached is not None and n > 0:
        a_obj = _attachment_area(attached)
        a_rob = float(4 * np.pi * np.sum(robot.spheres.radii**2)) * len(cand) / max(len(pts), 1)
        n_obj = int(round(n * a_obj / (a_obj + a_rob)))
        n_obj = min(max(n_obj, 1), n - 1)
    n_rob = n - n_obj
    idx = cand[rng.choice(len(cand), size=n_rob, replace=len(cand) < n_rob)] if n_rob else np.empty(0, dtype=int)
    out = pts[idx]
    index = idx
    if n_obj:
        out = np.concatenate([out, _attachment_surface(robot, q, attached, n_obj, rng)])
        index = np.concatenate([idx, np.full(n_obj, -1)])
    return (out, index) if return_index else out


# ----------------------------------------------------------------------------
# observations


@dataclass(frozen=True, eq=False)
class SegmentedCloud:
    """Robot, goal and obstacle segments of one observation.

    The robot segment is a pure function of ``(q, robot_seed)`` and is
    computed on first access, so rolling the robot forward is cheap.
    """

    robot: RobotDescription = field(repr=False)
    q: np.ndarray
    g: np.ndarray
    attached: AttachedObject | None
    obstacle_points: np.ndarray
    goal_points: np.ndarray
    robot_seed: int
    padded: bool = False
    n_robot: int = N_ROBOT
    include_goal_object: bool = True

    @cached_property
    def robot_points(self) -> np.ndarray:
        return robot_cloud(self.robot, self.q, self.attached, self.n_robot, make_rng(self.robot_seed, 1))

    def segments(self) -> dict:
        return {"robot": self.robot_points, "goal": self.goal_points, "obstacle": self.obstacle_points}

    def points_and_labels(self) -> tuple[np.ndarray, np.ndarray]:
        segs = self.segments()
        pts = np.concatenate([segs[k] for k in LABELS])
        lab = np.concatenate([np.full(len(segs[k]), v, dtype=np.uint8) for k, v in LABELS.items()])
        return pts, lab


def subsample_obstacles(points: np.ndarray, n: int, rng) -> tuple[np.ndarray, bool]:
    """Uniform subsample without replacement, or pad by resampling with replacement (flagged)."""
    m = len(points)
    if m == 0:
        return np.empty((0, 3)), False
    if m >= n:
        return points[np.sort(rng.choice(m, size=n, replace=False))], False
    extra = points[rng.choice(m, size=n - m, replace=True)]
    return np.concatenate([points, extra]), True


def assemble_observation(
    full_cloud,
    robot: RobotDescription,
    q_t,
    g,
    attached: AttachedObject | None,
    rng,
    n_obstacle: int = N_OBSTACLE,
    n_robot: int = N_ROBOT,
    eps: float = SEGMENT_EPS,
    noise_std: float = 0.0,
    include_goal_object: bool = True,
) -> SegmentedCloud:
    """Segment the robot out of ``full_cloud`` at ``q_t`` and add robot and goal clouds."""
    cloud = np.asarray(full_cloud, dtype=float).reshape(-1, 3)
    if noise_std > 0 and len(cloud):
        cloud = cloud + rng.normal(0.0, noise_std, cloud.shape)
    obstacles = segment_robot_points(cloud, robot, q_t, attached, eps)
    obstacles, padded = subsample_obstacles(obstacles, n_obstacle, rng)
    goal_obj = attached if include_goal_object else None
    goal = robot_cloud(robot, g, goal_obj, n_robot, rng)
    seed = int(rng.integers(0, 2**63 - 1))
    return SegmentedCloud(
        robot=robot,
        q=np.asarray(q_t, dtype=float).copy(),
        g=np.asarray(g, dtype=float).copy(),
        attached=attached,
        obstacle_points=obstacles,
        goal_points=goal,
        robot_seed=seed,
        padded=padded,
        n_robot=n_robot,
        include_goal_object=include_goal_object,
    )


def update_observation(obs: SegmentedCloud, q_prev, q_new) -> SegmentedCloud:
    """Replace the robot segment with one at ``q_new``; obstacle and goal segments are shared."""
    if not np.array_equal(np.asarray(q_prev, dtype=float), obs.q):
        raise ValueError("q_prev does not match the observation's configuration")
    seed = int(make_rng(obs.robot_seed, 2).integers(0, 2**63 - 1))
    return replace(obs, q=np.asarray(q_new, dtype=float).copy(), robot_seed=seed)


# ----------------------------------------------------------------------------
# PLY export


def write_ply(path, points, labels) -> FsPath:
    """ASCII PLY with ``x y z`` floats and a ``label`` byte per vertex."""
    path = FsPath(path)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    head = [
        "ply",
        "format ascii 1.0",
        "comment labels: 0 robot, 1 goal, 2 obstacle",
        f"element vertex {len(points)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar label",
        "end_header",
    ]
    body = [f"{x!r} {y!r} {z!r} {int(l)}" for (x, y, z), l in zip(points.tolist(), labels.tolist())]
    path.write_text("\n".join(head + body) + "\n")
    return path


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    lines = FsPath(path).read_text().splitlines()
    end = lines.index("end_header")
    n = next(int(l.split()[2]) for l in lines[:end] if l.startswith("element vertex"))
    rows = [l.split() for l in lines[end + 1 : end + 1 + n]]
    pts = np.array([[float(v) for v in r[:3]] for r in rows]).reshape(-1, 3)
    lab = np.array([int(r[3]) for r in rows], dtype=np.uint8)
    return pts, lab


def export_observation(obs: SegmentedCloud, path) -> FsPath:
    pts, lab = obs.points_and_labels()
    return write_ply(path, pts, lab)
