"""Start/goal sampling: free-space and tight-space configurations, in-hand objects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import transforms as tf
from ..collision import CollisionChecker, CollisionWorld
from ..robot import AttachedObject, EePose, RobotDescription, ee_transform, inverse_kinematics
from .compose import Scene

FREE, TIGHT = "free", "tight"
TIGHT_RATIO = 0.5
ATTACHED_RATIO = 0.5
FREE_EE_CLEARANCE = 0.15
GRIPPER_CLEARANCE = 0.03  # lateral room needed around the EE point inside a region
SHOULDER = np.array([0.0, 0.0, 0.333])
WRIST_REACH = 0.80  # shoulder to wrist-centre reach
WRIST_BACKSET = 0.32  # TCP to wrist centre along the approach axis
OBJECT_SIZE = (0.03, 0.30)
GRASP_CUBE = 0.05
ATTACHED_KINDS = ("box", "cylinder", "sphere", "mesh")


class SamplingFailure(RuntimeError):
    """No valid configuration found within the attempt budget."""


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    scene_id: int
    q0: np.ndarray
    g: np.ndarray
    attached: AttachedObject | None = None
    q0_class: str = FREE
    g_class: str = FREE

    def __post_init__(self):
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float))
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))


def _point_aabb_distance(p, lo, hi) -> float:
    return float(np.linalg.norm(np.maximum(0.0, np.maximum(lo - p, p - hi))))


def _feasible_regions(scene: Scene):
    out = []
    for _, region in scene.regions():
        room = region.box.half_extents - GRIPPER_CLEARANCE
        if np.all(room > 0):
            out.append(region)
    return out


def _approach_orientation(approach, lateral, roll: float) -> np.ndarray:
    """Rotation with z along ``approach`` and y near ``lateral``, rolled by ``roll`` about z."""
    z = np.asarray(approach, dtype=float)
    z = z / np.linalg.norm(z)
    y = np.asarray(lateral, dtype=float) - np.dot(lateral, z) * z
    if np.linalg.norm(y) < 1e-6:
        ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        y = np.cross(z, ref)
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=1) @ tf.rot_z(roll)


def _tight_target(region, rng):
    """EE pose inside ``region``: approach along the region's entry axis, fingers spread across its wider side."""
    room = region.box.half_extents - GRIPPER_CLEARANCE
    p = tf.apply(region.box.pose, rng.uniform(-room, room)[None])[0]
    approach = np.asarray(region.approach, dtype=float)
    axes = region.box.rotation.T  # rows: region axes in the world
    along = np.argmax(np.abs(axes @ approach))
    lateral = [k for k in range(3) if k != along]
    wide = max(lateral, key=lambda k: region.box.half_extents[k])
    roll = rng.normal(0.0, 0.25) + (np.pi if rng.uniform() < 0.5 else 0.0)
    return p, _approach_orientation(approach, axes[wide], roll)


def _reachable(p, approach) -> bool:
    wrist = p - WRIST_BACKSET * np.asarray(approach) / np.linalg.norm(approach)
    return bool(np.linalg.norm(wrist - SHOULDER) <= WRIST_REACH)


def sample_config(
    scene: Scene,
    cls: str,
    rng,
    world: CollisionWorld,
    robot: RobotDescription,
    attached: AttachedObject | None = None,
    budget: int = 200,
    ik_restarts: int = 2,
) -> np.ndarray:
    """Draw one collision-free configuration of class ``free`` or ``tight``.

    Raises:
        SamplingFailure: when ``budget`` attempts yield nothing valid.
    """
    chain = robot.chain
    checker = CollisionChecker(robot, world, attached)
    if cls == FREE:
        boxes = [a.aabb() for a in scene.assets]
        for _ in range(budget):
            q = chain.random_config(rng)
            p = ee_transform(chain, q)[:3, 3]
            if any(_point_aabb_distance(p, lo, hi) <= FREE_EE_CLEARANCE for lo, hi in boxes):
                continue
            if not checker.config_in_collision(q):
                return q
        raise SamplingFailure(f"no free configuration within {budget} attempts")
    if cls != TIGHT:
        raise ValueError(f"unknown configuration class {cls!r}")
    regions = _feasible_regions(scene)
    if not regions:
        raise SamplingFailure("scene has no interior region large enough for the gripper")
    for _ in range(budget):
        region = regions[int(rng.integers(len(regions)))]
        p, R = _tight_target(region, rng)
        if not _reachable(p, R[:, 2]):
            continue
        seed = chain.neutral + rng.normal(0.0, 0.2, 7)
        seed[0] = np.arctan2(p[1], p[0]) + rng.normal(0.0, 0.2)
        target = EePose.from_matrix(tf.make_transform(R, p))
        res = inverse_kinematics(chain, target, chain.clip(seed), rng=rng, restarts=ik_restarts)
        if not res.success:
            continue
        if not region.box.contains(ee_transform(chain, res.q)[:3, 3])[0]:
            continue
        if not checker.config_in_collision(res.q):
            return res.q
    raise SamplingFailure(f"no tight configuration within {budget} attempts")


def draw_problem_spec(rng, tight_ratio: float = TIGHT_RATIO, attached_ratio: float = ATTACHED_RATIO) -> tuple[str, str, bool]:
    """Endpoint classes and whether an object is held, each an independent coin flip."""
    u = rng.uniform(size=3)
    return (
        TIGHT if u[0] < tight_ratio else FREE,
        TIGHT if u[1] < tight_ratio else FREE,
        bool(u[2] < attached_ratio),
    )


def _random_rotation(rng) -> np.ndarray:
    q = rng.normal(size=4)
    return tf.matrix_from_quat(q / np.linalg.norm(q))


def sample_attached_object(rng, library=None) -> AttachedObject:
    """Random box, cylinder, sphere or mesh with longest side in 3-30 cm, grasped near the finger midpoint."""
    kinds = ATTACHED_KINDS if library else ATTACHED_KINDS[:3]
    kind = kinds[int(rng.integers(len(kinds)))]
    size = float(rng.uniform(*OBJECT_SIZE))
    offset = tf.make_transform(_random_rotation(rng), rng.uniform(-GRASP_CUBE / 2, GRASP_CUBE / 2, 3))
    if kind == "box":
        ext = rng.uniform(0.3, 1.0, 3)
        ext[int(rng.integers(3))] = 1.0
        return AttachedObject("box", tuple((0.5 * size * ext).tolist()), offset)
    if kind == "cylinder":
        # longest side is the height or the diameter
        if rng.uniform() < 0.5:
            return AttachedObject("cylinder", (0.5 * size * float(rng.uniform(0.3, 1.0)), size), offset)
        return AttachedObject("cylinder", (0.5 * size, size * float(rng.uniform(0.3, 1.0))), offset)
    if kind == "sphere":
        return AttachedObject("sphere", (0.5 * size,), offset)
    mesh = library[int(rng.integers(len(library)))]
    v = mesh.vertices - 0.5 * (mesh.vertices.min(0) + mesh.vertices.max(0))
    v = v * (size / np.max(np.ptp(v, axis=0)))
    return AttachedObject("mesh", (), offset, vertices=v, faces=mesh.faces.copy())


def sample_problem(
    scene: Scene,
    rng,
    world: CollisionWorld,
    robot: RobotDescription,
    library=None,
    budget: int = 200,
    spec: tuple | None = None,
    tight_ratio: float = TIGHT_RATIO,
    attached_ratio: float = ATTACHED_RATIO,
) -> PlanningProblem:
    """Sample classes, optional held object, then a start and a distinct goal."""
    c0, cg, hold = draw_problem_spec(rng, tight_ratio, attached_ratio) if spec is None else spec
    attached = sample_attached_object(rng, library) if hold else None
    q0 = sample_config(scene, c0, rng, world, robot, attached, budget)
    for _ in range(budget):
        g = sample_config(scene, cg, rng, world, robot, attached, budget)
        if not np.array_equal(g, q0):
            return PlanningProblem(scene.seed, q0, g, attached, c0, cg)
    raise SamplingFailure("goal coincides with start")
