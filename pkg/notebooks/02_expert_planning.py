"""
Expert planning and smoothing
=============================

Plan one problem, shortcut and smooth it, then re-check the result at a
resolution ten times finer than the planner used.
"""

# %%
import numpy as np

from mpforge.collision import CollisionChecker
from mpforge.planner import PlanStatus, SmoothingFailure, relabel_hindsight, reverse_trajectory, smooth_spline, plan
from mpforge.robot import load_robot
from mpforge.rng import make_rng
from mpforge.scenegen.compose import generate_scene, world_from_scene
from mpforge.scenegen.problems import SamplingFailure, sample_problem

robot = load_robot()

# %% Pick the first seed whose endpoints can be sampled.
seed = 0
while True:
    scene = generate_scene(seed, max_assets=2)
    world = world_from_scene(scene)
    try:
        problem = sample_problem(scene, make_rng(seed, 1), world, robot)
        break
    except SamplingFailure:
        seed += 1

result = plan(problem, world, robot, make_rng(seed, 2), budget=2.0)
print(f"seed {seed}: {result.status.value} in {result.planning_time:.2f} s, cost {result.cost:.3f}")
print("cost after each improvement:", [round(c, 3) for _, c in result.cost_history])

# %% Smoothing gives at most 50 waypoints, at most 0.1 rad apart, with the exact endpoints.
checker = CollisionChecker(robot, world, problem.attached)
if result.status == PlanStatus.EXACT:
    try:
        traj = smooth_spline(result.path, robot.chain, checker)
        steps = np.max(np.abs(traj.deltas), axis=1)
        print(f"{traj.method}: {len(traj)} waypoints, largest step {steps.max():.3f} rad, dt {traj.dt:.3f} s")
        print("endpoints exact:", np.array_equal(traj.start, problem.q0), np.array_equal(traj.end, problem.g))
        print("collides at 0.005 rad:", checker.path_in_collision(traj.waypoints, 0.005, margin=0.0))
        back = reverse_trajectory(traj)
        print("reversal is an involution:", reverse_trajectory(back) == traj)
    except SmoothingFailure as err:
        print("not smoothable under the waypoint budget:", err)

# %% An approximate result becomes an exact example for the goal it did reach.
if result.status == PlanStatus.APPROXIMATE:
    relabeled, raw = relabel_hindsight(result, problem)
    print("relabeled goal equals final waypoint:", np.array_equal(raw.waypoints[-1], relabeled.g))
