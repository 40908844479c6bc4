"""Goal-reaching and ground-truth collision metrics shared by the policy and harness layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms as tf
from .collision import CollisionChecker, CollisionWorld, interpolate_configs
from .robot import KinematicChain, RobotDescription, ee_transform

POS_TOL = 0.01  # m
ROT_TOL_DEG = 15.0
DENSE_RESOLUTION = 0.005
CONTACT_MARGIN = 0.0


def ee_errors(chain: KinematicChain, q, g, flip180: bool = False) -> tuple[float, float]:
    """EE position error (m) and geodesic rotation error (deg) between ``q`` and ``g``.

    With ``flip180`` the goal orientation rotated by pi about the EE z axis
    also counts as a match (symmetric parallel grippers).
    """
    Tq = ee_transform(chain, q, check_limits=False)
    Tg = ee_transform(chain, g, check_limits=False)
    pos = float(np.linalg.norm(Tq[:3, 3] - Tg[:3, 3]))
    targets = [Tg[:3, :3]]
    if flip180:
        targets.append(Tg[:3, :3] @ tf.rot_z(np.pi))
    qq = tf.quat_from_matrix(Tq[:3, :3])
    rot = min(tf.quat_angle(qq, tf.quat_from_matrix(R)) for R in targets)
    return pos, float(np.degrees(rot))


def ground_truth_collisions(
    checker: CollisionChecker,
    waypoints,
    resolution: float = DENSE_RESOLUTION,
    margin: float = CONTACT_MARGIN,
) -> int:
    """Number of densely interpolated configurations in contact with the exact scene or the robot itself."""
    w = np.asarray(waypoints, dtype=float).reshape(-1, 7)
    if len(w) == 1:
        qs = w
    else:
        parts = [interpolate_configs(a, b, resolution)[:-1] for a, b in zip(w[:-1], w[1:])]
        qs = np.concatenate(parts + [w[-1:]])
    hits = 0
    for k in range(0, len(qs), 256):
        hits += int(np.count_nonzero(checker.configs_in_collision(qs[k : k + 256], margin)))
    return hits


@dataclass(frozen=True)
class EvalReport:
    success: bool
    ee_pos_error: float
    ee_rot_error: float
    ground_truth_collisions: int
    planning_time: float
    safety_violation: bool
    joint_limit_violation: bool = False

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def evaluate(
    waypoints,
    g,
    world: CollisionWorld,
    robot: RobotDescription,
    attached=None,
    planning_time: float = 0.0,
    flip180: bool = False,
    resolution: float = DENSE_RESOLUTION,
    pos_tol: float = POS_TOL,
    rot_tol: float = ROT_TOL_DEG,
) -> EvalReport:
    """Success iff the final EE pose is within ``pos_tol``/``rot_tol`` of the goal's and nothing is hit."""
    w = np.asarray(waypoints, dtype=float).reshape(-1, 7)
    chain = robot.chain
    pos, rot = ee_errors(chain, w[-1], g, flip180)
    hits = ground_truth_collisions(CollisionChecker(robot, world, attached), w, resolution)
    limits = not all(chain.within_limits(q) for q in w)
    success = pos <= pos_tol and rot <= rot_tol and hits == 0
    return EvalReport(success, pos, rot, hits, float(planning_time), hits > 0 or limits, limits)
