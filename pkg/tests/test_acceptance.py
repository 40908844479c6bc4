"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Each test records a line via the ``acceptance`` fixture; the lines are also
repeated in the terminal summary. Tests fail when their criterion fails.
"""

import contextlib
import io
import json
import time

import numpy as np
import pytest

from mpforge import transforms as tf
from mpforge.cli import main
from mpforge.cloudsim import robot_cloud
from mpforge.collision import (
    CollisionChecker,
    CollisionWorld,
    cloud_collision_count,
    robot_min_sdf,
    sdf_point_box,
    sdf_point_sphere,
    segment_robot_points,
)
from mpforge.geometry import Cuboid
from mpforge.harness.config import Config
from mpforge.harness.dataset import dataset_digest
from mpforge.harness.evaluation import tto_benchmark
from mpforge.metrics import evaluate
from mpforge.planner import (
    MAX_SPACING,
    MAX_WAYPOINTS,
    Path,
    PlanStatus,
    SmoothingFailure,
    plan,
    relabel_hindsight,
    reverse_trajectory,
    smooth_spline,
)
from mpforge.policy import score_trajectory
from mpforge.rng import make_rng
from mpforge.robot import ee_transform, forward_kinematics_batch, sphere_centers, sphere_centers_batch
from mpforge.scenegen.assets import constraint_check
from mpforge.scenegen.compose import CONTACT_TOL, compose_scene, deepest_contact, generate_scene, world_from_scene
from mpforge.scenegen.problems import SamplingFailure, sample_problem
from oracles import box_sdf, cloud_count, sphere_sdf, trajectory_score

pytestmark = pytest.mark.acceptance

N_EXPERT_PROBLEMS = 200
EXPERT_BUDGET = 2.0
FINE_RESOLUTION = 0.005  # ten times finer than the planner's edge resolution


# ----------------------------------------------------------------------------
# 1. SDF oracles


def test_criterion_1_sdf_oracles(acceptance, robot):
    t0 = time.perf_counter()
    rng = make_rng(101)
    n, worst, mismatches = 1000, 0.0, 0
    for _ in range(n):
        c, r = rng.uniform(-1, 1, 3), rng.uniform(0.005, 0.3)
        x = rng.uniform(-1.5, 1.5, 3)
        worst = max(worst, abs(float(sdf_point_sphere(x, c, r)) - sphere_sdf(x, c, r)))
    for _ in range(n):
        R = tf.matrix_from_quat(rng.normal(size=4))
        h = rng.uniform(0.01, 0.4, 3)
        center = rng.uniform(-0.5, 0.5, 3)
        box = Cuboid(tf.make_transform(R, center), h)
        x = center + rng.uniform(-0.6, 0.6, 3)
        worst = max(worst, abs(float(sdf_point_box(x[None], box)[0]) - box_sdf(x, box.center, box.rotation, h)))
    chain, model = robot.chain, robot.spheres
    for _ in range(n):
        q = chain.random_config(rng)
        centers, radii = sphere_centers(chain, model, q)
        k = rng.integers(len(radii), size=24)
        dirs = rng.normal(size=(24, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = centers[k] + dirs * (radii[k] + rng.uniform(-0.03, 0.03, 24))[:, None]
        if cloud_collision_count(robot, q, pts, eps=0.01) != cloud_count(pts, centers, radii, 0.01):
            mismatches += 1
    for _ in range(n):
        w = chain.random_config(rng) + rng.normal(0, 0.05, (2, 7))
        c, r = sphere_centers_batch(chain, model, forward_kinematics_batch(chain, w))
        k = rng.integers(len(r), size=12)
        pts = c[0][k] + rng.normal(0, 0.06, (12, 3))
        expect = trajectory_score(list(zip(c, [r] * len(c))), pts, 0.01)
        if score_trajectory(w, pts, robot, eps=0.01) != expect:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and mismatches == 0 and elapsed < 30
    acceptance(1, ok, f"4x{n} fixtures, max distance error {worst:.2e} m, count mismatches {mismatches}, {elapsed:.1f} s")
    assert ok


# ----------------------------------------------------------------------------
# 2. scene validity


def test_criterion_2_scene_validity(acceptance):
    t0 = time.perf_counter()
    n_scenes, penetrations, bad_params, bad_checks, n_assets = 1000, 0, 0, 0, 0
    for seed in range(n_scenes):
        scene = compose_scene(make_rng(seed, 0), max_assets=5, seed=seed)
        boxes = [a.cuboids for a in scene.assets]
        for i, a in enumerate(scene.assets):
            n_assets += 1
            bad_params += not a.params.in_range()
            bad_checks += not constraint_check(a)
            for j in range(i):
                penetrations += deepest_contact(boxes[i], boxes[j])[0] > CONTACT_TOL
    elapsed = time.perf_counter() - t0
    ok = penetrations == 0 and bad_params == 0 and elapsed < 120
    acceptance(
        2, ok,
        f"{n_scenes} scenes, {n_assets} assets, {penetrations} penetrations > 1e-4 m, "
        f"{bad_params} out-of-range params, {bad_checks} failed category checks, {elapsed:.1f} s",
    )
    assert ok


# ----------------------------------------------------------------------------
# 3-5. expert planning, smoothing, augmentation


@pytest.fixture(scope="module")
def expert_runs(robot):
    """Plan ``N_EXPERT_PROBLEMS`` sampled desk-scale problems with a 2 s budget."""
    t0 = time.perf_counter()
    runs, sampling_failures, seed, plan_time = [], 0, 0, 0.0
    while len(runs) < N_EXPERT_PROBLEMS:
        scene = generate_scene(seed, 2)
        world = world_from_scene(scene)
        try:
            problem = sample_problem(scene, make_rng(seed, 1), world, robot)
        except SamplingFailure:
            sampling_failures += 1
            seed += 1
            continue
        t = time.perf_counter()
        result = plan(problem, world, robot, make_rng(seed, 2), budget=EXPERT_BUDGET)
        plan_time += time.perf_counter() - t
        runs.append((seed, world, problem, result))
        seed += 1
    return runs, sampling_failures, plan_time, time.perf_counter() - t0


def test_criterion_3_expert_soundness(acceptance, robot, expert_runs):
    runs, sampling_failures, elapsed, total = expert_runs
    t0 = time.perf_counter()
    exact = [(w, p, r) for _, w, p, r in runs if r.status == PlanStatus.EXACT]
    approx = sum(r.status == PlanStatus.APPROXIMATE for *_, r in runs)
    dirty = sum(
        CollisionChecker(robot, w, p.attached).path_in_collision(r.path.waypoints, FINE_RESOLUTION, margin=0.0)
        for w, p, r in exact
    )
    elapsed += time.perf_counter() - t0
    exact_rate = len(exact) / len(runs)
    clean_rate = 1 - dirty / max(len(exact), 1)
    ok = exact_rate >= 0.9 and clean_rate >= 0.99 and elapsed < 600
    acceptance(
        3, ok,
        f"{len(runs)} feasible problems ({sampling_failures} seeds skipped, endpoints unsampleable): "
        f"exact {exact_rate:.1%}, approximate {approx}, fine-resolution clean {clean_rate:.1%}, "
        f"planning and re-validation {elapsed:.0f} s (with scene and endpoint sampling {total:.0f} s)",
    )
    assert ok


def _smoothed(robot, expert_runs, limit=100):
    out, rejected = [], []
    for seed, world, problem, result in expert_runs[0]:
        if result.status != PlanStatus.EXACT:
            continue
        checker = CollisionChecker(robot, world, problem.attached)
        try:
            out.append((world, problem, smooth_spline(result.path, robot.chain, checker)))
        except SmoothingFailure:
            rejected.append(float(np.max(np.abs(problem.g - problem.q0))))
        if len(out) + len(rejected) == limit:
            break
    return out, rejected


def test_criterion_4_smoothing_contract(acceptance, robot, expert_runs):
    chain = robot.chain
    smoothed, rejected = _smoothed(robot, expert_runs)
    violations = 0
    for _, problem, traj in smoothed:
        w = traj.waypoints
        d = np.diff(w, axis=0)
        z = np.zeros((1, 7))
        acc = np.diff(np.concatenate([z, d, z]), axis=0)
        violations += not (
            len(w) <= MAX_WAYPOINTS
            and (len(w) == 1 or np.max(np.abs(d)) <= MAX_SPACING + 1e-12)
            and np.array_equal(w[0], problem.q0)
            and np.array_equal(w[-1], problem.g)
            and np.all(np.abs(d) <= chain.velocity_limits * traj.dt + 1e-12)
            and np.all(np.abs(acc) <= chain.acceleration_limits * traj.dt**2 + 1e-12)
        )
    budget = (MAX_WAYPOINTS - 1) * MAX_SPACING
    provable = sum(r > budget for r in rejected)
    ok = violations == 0
    acceptance(
        4, ok,
        f"{len(smoothed) + len(rejected)} expert paths: {len(smoothed)} smoothed with {violations} contract violations; "
        f"{len(rejected)} rejected (SmoothingFailure), {provable} of them provably infeasible "
        f"(start-goal max-norm > {budget:.1f} rad)",
    )
    assert ok


def test_criterion_5_augmentation(acceptance, robot, expert_runs):
    smoothed, _ = _smoothed(robot, expert_runs)
    involution = sum(reverse_trajectory(reverse_trajectory(t)) == t for _, _, t in smoothed)
    reversed_clean = sum(
        not CollisionChecker(robot, w, p.attached).path_in_collision(reverse_trajectory(t).waypoints)
        for w, p, t in smoothed
    )
    relabeled, relabel_exact = 0, 0
    for _, world, problem, result in expert_runs[0]:
        if result.status != PlanStatus.APPROXIMATE:
            continue
        new, raw = relabel_hindsight(result, problem)
        try:
            traj = smooth_spline(Path(raw.waypoints), robot.chain, CollisionChecker(robot, world, new.attached))
        except SmoothingFailure:
            traj = raw
        relabeled += 1
        relabel_exact += np.array_equal(traj.waypoints[-1], new.g)
    n = len(smoothed)
    ok = n >= 1 and involution == n and reversed_clean == n and relabel_exact == relabeled
    acceptance(
        5, ok,
        f"reverse twice = identity {involution}/{n}, reversed collision-free {reversed_clean}/{n}, "
        f"relabeled final waypoint == goal {relabel_exact}/{relabeled}",
    )
    assert ok


# ----------------------------------------------------------------------------
# 6. test-time optimisation


def test_criterion_6_tto(acceptance):
    t0 = time.perf_counter()
    bench = tto_benchmark(50, Config(), first_seed=0, noise_std=0.02, n_samples=100, max_seeds=400)
    elapsed = time.perf_counter() - t0
    gain = bench.tto_success_rate - bench.single_success_rate
    probs = bench.problems
    score_zero_ok = all(p.scores[p.selected_index] == 0 for p in probs if np.any(p.scores == 0))
    truly_free = [p for p in probs if not all(p.rollout_collision)]
    free_selected = sum(not p.rollout_collision[p.selected_index] for p in truly_free)
    free_share = np.mean([np.mean(np.logical_not(p.rollout_collision)) for p in probs]) if probs else 0.0
    hist = bench.score_histogram()
    ok = len(probs) == 50 and gain >= 0.10 and score_zero_ok and elapsed < 600
    acceptance(
        6, ok,
        f"{len(probs)} shelf problems ({len(bench.skipped)} seeds skipped): TTO success {bench.tto_success_rate:.1%} vs "
        f"single rollout {bench.single_success_rate:.1%} (+{100 * gain:.1f} pp); score-0 guarantee "
        f"{'held' if score_zero_ok else 'BROKEN'}; selection collision-free in {free_selected}/{len(truly_free)} problems "
        f"with a collision-free sample; {free_share:.0%} of rollouts collision-free; {elapsed:.0f} s",
    )
    acceptance("6h", True, f"rollout score histogram {json.dumps(hist)}")
    assert ok


# ----------------------------------------------------------------------------
# 7. segmentation


def test_criterion_7_segmentation(acceptance, robot):
    rng = make_rng(707)
    lost_far, kept_on, n_on, n_far = 0, 0, 0, 0
    for _ in range(100):
        q = robot.chain.random_config(rng)
        on = robot_cloud(robot, q, None, 512, rng)
        box = rng.uniform([-1.0, -1.0, -0.2], [1.0, 1.0, 1.4], size=(4000, 3))
        far = box[robot_min_sdf(robot, q, box) >= 0.02]
        kept = segment_robot_points(np.concatenate([on, far]), robot, q, None, 0.01)
        n_on += len(on)
        n_far += len(far)
        on_set = {tuple(p) for p in on.tolist()}
        kept_on += sum(tuple(p) in on_set for p in kept.tolist())
        lost_far += len(far) - (len(kept) - sum(tuple(p) in on_set for p in kept.tolist()))
    ok = kept_on == 0 and lost_far == 0
    acceptance(7, ok, f"100 configs: on-robot points removed {n_on - kept_on}/{n_on}, points >= 2 cm kept {n_far - lost_far}/{n_far}")
    assert ok


# ----------------------------------------------------------------------------
# 8. performance


def test_criterion_8_performance(acceptance, robot):
    rng = make_rng(808)
    pts = rng.uniform([-0.8, -0.8, 0.0], [0.8, 0.8, 1.2], size=(4096, 3))
    qs = [robot.chain.random_config(rng) for _ in range(1000)]
    for q in qs[:20]:
        cloud_collision_count(robot, q, pts)
    times = []
    for q in qs:
        t = time.perf_counter()
        cloud_collision_count(robot, q, pts)
        times.append(time.perf_counter() - t)
    med = 1e3 * float(np.median(times))
    n_spheres = len(robot.spheres.radii)
    ok = med <= 20.0
    acceptance(8, ok, f"4096 points x {n_spheres} spheres: median {med:.2f} ms over 1000 queries (p90 {1e3 * np.percentile(times, 90):.2f} ms)")
    assert ok


# ----------------------------------------------------------------------------
# 9. determinism


def _gen_data(out, workers):
    with contextlib.redirect_stdout(io.StringIO()):
        return main(["gen-data", "--seeds", "0:6", "--out", str(out), "--workers", str(workers)])


def test_criterion_9_determinism(acceptance, tmp_path):
    codes = [_gen_data(tmp_path / "a", 1), _gen_data(tmp_path / "b", 1), _gen_data(tmp_path / "c", 4)]
    digests = [dataset_digest(tmp_path / d) for d in "abc"]
    n = json.loads((tmp_path / "a" / "manifest.json").read_text())["n_records"]
    ok = codes == [0, 0, 0] and len(set(digests)) == 1 and n > 0
    acceptance(9, ok, f"gen-data seeds 0-5 ({n} records): run1 == run2 (1 worker) == run3 (4 workers): {len(set(digests)) == 1}, digest {digests[0][:16]}")
    assert ok


# ----------------------------------------------------------------------------
# 10. metric boundaries


def test_criterion_10_metric_boundaries(acceptance, robot):
    chain = robot.chain
    world = CollisionWorld(cuboids=[], triangles=np.empty((0, 3, 3)))
    q0 = chain.neutral.copy()
    g = q0 + np.array([0.3, -0.2, 0.1, 0.2, 0.0, 0.1, 0.2])
    traj = smooth_spline(Path([q0, g]), chain)
    assert np.array_equal(traj.waypoints[-1], g)
    p = ee_transform(chain, g)[:3, 3]
    radius = float(np.hypot(p[0], p[1]))
    outcomes = []
    # base yaw moves the EE on a circle: a chord of length d needs yaw 2 asin(d / 2r)
    for d in (0.0099, 0.01 - 1e-7, 0.01 + 1e-7, 0.0101):
        w = traj.waypoints.copy()
        w[-1, 0] += 2 * np.arcsin(d / (2 * radius))
        rep = evaluate(w, g, world, robot)
        outcomes.append(("pos", d, rep.ee_pos_error, rep.success, d <= 0.01))
    # the last joint turns the EE about its own axis, leaving the position fixed
    for deg in (14.9, 15 - 1e-6, 15 + 1e-6, 15.1):
        w = traj.waypoints.copy()
        w[-1, 6] += np.radians(deg)
        rep = evaluate(w, g, world, robot)
        outcomes.append(("rot", deg, rep.ee_rot_error, rep.success, deg <= 15))
    ok = all(success == expected for *_, success, expected in outcomes)
    detail = ", ".join(f"{k}={v:.8g}:{'ok' if s else 'fail'}" for k, v, _, s, _ in outcomes)
    acceptance(10, ok, f"boundary fixtures {detail}")
    assert ok
