"""Proposer deployment: GMM action sampling, rollouts, point-cloud scoring and test-time selection.

A proposer maps ``(observation, q_t, g, history, step)`` to a 5-mode GMM over
delta joint angles. Rollouts use the linear forward model: the next state is
``q_t + dq`` and the obstacle segment never changes. Test-time selection
draws ``N`` rollouts and keeps the one whose waypoints put the fewest
obstacle points inside the robot's sphere model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Protocol

import numpy as np

from .cloudsim import SegmentedCloud, update_observation
from .collision import CloudIndex, CollisionChecker, CollisionWorld
from .metrics import DENSE_RESOLUTION, ee_errors, ground_truth_collisions, POS_TOL, ROT_TOL_DEG
from .planner import Trajectory
from .rng import child_seed, make_rng
from .robot import AttachedObject, RobotDescription, forward_kinematics_batch, sphere_centers_batch

N_MODES = 5
ACTION_BOUND = 0.1
GOAL_TOL = 0.01
HISTORY = 2
MIN_STD = 1e-12


@dataclass(frozen=True, eq=False)
class GmmAction:
    weights: np.ndarray  # (5,)
    means: np.ndarray  # (5, 7)
    stds: np.ndarray  # (5, 7)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float).reshape(-1, 7)
        s = np.asarray(self.stds, dtype=float).reshape(-1, 7)
        if len(w) != N_MODES or m.shape != (N_MODES, 7) or s.shape != (N_MODES, 7):
            raise ValueError(f"a GMM action has exactly {N_MODES} modes over 7 joints")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(s <= 0):
            raise ValueError("mode standard deviations must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stds", s)

    @classmethod
    def single(cls, mean, std) -> "GmmAction":
        """All weight on mode 0; the unused modes copy it."""
        mean = np.asarray(mean, dtype=float)
        std = np.maximum(np.broadcast_to(np.asarray(std, dtype=float), (7,)), MIN_STD)
        w = np.zeros(N_MODES)
        w[0] = 1.0
        return cls(w, np.tile(mean, (N_MODES, 1)), np.tile(std, (N_MODES, 1)))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GmmAction":
        return cls(d["weights"], d["means"], d["stds"])


def clamp_action(dq, bound: float = ACTION_BOUND) -> np.ndarray:
    """Scale ``dq`` down so its max-norm is at most ``bound`` (direction preserved)."""
    dq = np.asarray(dq, dtype=float)
    m = float(np.max(np.abs(dq))) if dq.size else 0.0
    return dq * (bound / m) if m > bound else dq


def sample_gmm(action: GmmAction, rng, bound: float = ACTION_BOUND) -> np.ndarray:
    k = int(rng.choice(N_MODES, p=action.weights))
    dq = action.means[k] + action.stds[k] * rng.normal(size=7)
    return clamp_action(dq, bound)


class Proposer(Protocol):
    def propose(self, obs: SegmentedCloud, q_t: np.ndarray, g: np.ndarray, history: list, step: int) -> GmmAction:
        ...


@dataclass(frozen=True, eq=False)
class ConstantProposer:
    """Always the same single-mode action; ``mean=0`` gives the zero-action baseline."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(7))
    std: float = MIN_STD

    def propose(self, obs, q_t, g, history, step) -> GmmAction:
        return GmmAction.single(self.mean, self.std)


@dataclass(frozen=True, eq=False)
class GreedyProposer:
    """Straight toward the goal at the action bound."""

    std: float = MIN_STD

    def propose(self, obs, q_t, g, history, step) -> GmmAction:
        return GmmAction.single(clamp_action(np.asarray(g) - q_t), self.std)


@dataclass(frozen=True, eq=False)
class NoisyExpertProposer:
    """Tracks an expert trajectory with Gaussian noise.

    At step ``t`` the mean is the step from the current state to expert
    waypoint ``t + 1``. Past the end of the expert the mean heads for the goal
    (``past_end="settle"``, std ``settle_std``) or is zero
    (``past_end="zero"``, std ``noise_std``).
    """

    expert: Trajectory
    noise_std: float
    past_end: str = "settle"
    settle_std: float = 0.001

    def propose(self, obs, q_t, g, history, step) -> GmmAction:
        w = self.expert.waypoints
        if step + 1 < len(w):
            return GmmAction.single(clamp_action(w[step + 1] - q_t), self.noise_std)
        if self.past_end == "zero":
            return GmmAction.single(np.zeros(7), self.noise_std)
        return GmmAction.single(clamp_action(np.asarray(g) - q_t), self.settle_std)


@dataclass(frozen=True, eq=False)
class TraceProposer:
    """Replays recorded GMM actions, one JSON object per line with a ``step`` key."""

    actions: tuple

    @classmethod
    def load(cls, path) -> "TraceProposer":
        recs = [json.loads(l) for l in FsPath(path).read_text().splitlines() if l.strip()]
        recs.sort(key=lambda r: r["step"])
        return cls(tuple(GmmAction.from_dict(r) for r in recs))

    def save(self, path) -> FsPath:
        path = FsPath(path)
        lines = [json.dumps({"step": i, **a.to_dict()}) for i, a in enumerate(self.actions)]
        path.write_text("\n".join(lines) + "\n")
        return path

    def propose(self, obs, q_t, g, history, step) -> GmmAction:
        if step < len(self.actions):
            return self.actions[step]
        return GmmAction.single(np.zeros(7), MIN_STD)


@dataclass(frozen=True, eq=False)
class RolloutResult:
    trajectory: Trajectory
    reached_goal: bool
    steps: int
    observation: SegmentedCloud | None = field(default=None, repr=False)


def rollout(
    proposer,
    q0,
    g,
    obs0: SegmentedCloud,
    H: int,
    rng,
    goal_tol: float = GOAL_TOL,
    closed_loop=None,
) -> RolloutResult:
    """Roll the proposer forward under ``q <- q + dq`` for at most ``H`` steps.

    ``closed_loop``, when given, is called as ``closed_loop(step, q)`` and
    returns a fresh observation each step instead of the linear-model update.
    """
    if H < 1:
        raise ValueError("horizon must be at least 1")
    q = np.asarray(q0, dtype=float).copy()
    g = np.asarray(g, dtype=float)
    obs = obs0
    traj = [q.copy()]
    history = [q.copy()] * HISTORY
    reached = bool(np.max(np.abs(q - g)) <= goal_tol)
    t = 0
    while not reached and t < H:
        action = proposer.propose(obs, q, g, list(history), t)
        q_new = q + sample_gmm(action, rng)
        obs = closed_loop(t + 1, q_new) if closed_loop is not None else update_observation(obs, q, q_new)
        q = q_new
        traj.append(q.copy())
        history = history[1:] + [q.copy()]
        t += 1
        reached = bool(np.max(np.abs(q - g)) <= goal_tol)
    return RolloutResult(Trajectory(np.array(traj), 0.0, "raw"), reached, t, obs)


def _waypoint_spheres(robot: RobotDescription, waypoints, attached):
    w = np.asarray(waypoints, dtype=float).reshape(-1, 7)
    frames = forward_kinematics_batch(robot.chain, w)
    return sphere_centers_batch(robot.chain, robot.spheres, frames, attached)


def waypoint_scores(traj, obstacle_points, robot: RobotDescription, attached=None, eps: float = 0.01, index=None):
    """Per-waypoint count of obstacle points with robot-sphere SDF below ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    w = traj.waypoints if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    index = CloudIndex(obstacle_points) if index is None else index
    centers, radii = _waypoint_spheres(robot, w, attached)
    return index.count_batch(centers, radii, eps)


def score_trajectory(traj, obstacle_points, robot: RobotDescription, attached=None, eps: float = 0.01, index=None) -> int:
    """Total over all waypoints of obstacle points closer than ``eps`` to the sphere model."""
    return int(waypoint_scores(traj, obstacle_points, robot, attached, eps, index).sum())


@dataclass(frozen=True, eq=False)
class TTOResult:
    best: RolloutResult
    index: int
    scores: np.ndarray
    rollouts: tuple = field(default=(), repr=False)


def _one_rollout(proposer, q0, g, obs0, H, base, i, goal_tol):
    return rollout(proposer, q0, g, obs0, H, make_rng(base, i), goal_tol)


def tto_select(
    proposer,
    q0,
    g,
    obs0: SegmentedCloud,
    H: int,
    rng,
    N: int = 100,
    eps: float = 0.01,
    goal_tol: float = GOAL_TOL,
    n_jobs: int = 1,
    keep_rollouts: bool = False,
) -> TTOResult:
    """Draw ``N`` rollouts (stream ``i`` seeded by ``(base, i)``) and keep the lowest score.

    Ties go to the lowest sample index, so serial and parallel runs agree.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    base = child_seed(rng)
    if n_jobs == 1:
        results = [_one_rollout(proposer, q0, g, obs0, H, base, i, goal_tol) for i in range(N)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_one_rollout)(proposer, q0, g, obs0, H, base, i, goal_tol) for i in range(N)
        )
    index = CloudIndex(obs0.obstacle_points)
    scores = np.array([score_trajectory(r.trajectory, None, obs0.robot, obs0.attached, eps, index) for r in results])
    best = int(np.argmin(scores))
    return TTOResult(results[best], best, scores, tuple(results) if keep_rollouts else ())


@dataclass(frozen=True)
class ExecutionRecord:
    ground_truth_collisions: int
    in_collision: bool
    reached_goal: bool
    ee_pos_error: float
    ee_rot_error: float
    success: bool


def execute_open_loop(
    result: RolloutResult,
    g,
    world: CollisionWorld,
    robot: RobotDescription,
    attached: AttachedObject | None = None,
    resolution: float = DENSE_RESOLUTION,
) -> ExecutionRecord:
    """Re-check the committed trajectory densely against the exact scene and score goal reaching."""
    w = result.trajectory.waypoints
    hits = ground_truth_collisions(CollisionChecker(robot, world, attached), w, resolution)
    pos, rot = ee_errors(robot.chain, w[-1], g)
    reached = pos <= POS_TOL and rot <= ROT_TOL_DEG
    return ExecutionRecord(hits, hits > 0, reached, pos, rot, reached and hits == 0)
