import numpy as np
import pytest

from mpforge import transforms as tf
from mpforge.cloudsim import assemble_observation, scene_cloud
from mpforge.collision import CollisionWorld
from mpforge.geometry import Cuboid
from mpforge.metrics import ee_errors, evaluate, ground_truth_collisions
from mpforge.collision import CollisionChecker
from mpforge.planner import Trajectory
from mpforge.policy import (
    ACTION_BOUND,
    ConstantProposer,
    GmmAction,
    GreedyProposer,
    NoisyExpertProposer,
    TraceProposer,
    clamp_action,
    execute_open_loop,
    rollout,
    sample_gmm,
    score_trajectory,
    tto_select,
    waypoint_scores,
)
from mpforge.rng import make_rng
from mpforge.robot import forward_kinematics_batch, sphere_centers_batch
from oracles import trajectory_score


@pytest.fixture(scope="module")
def scene_obs(robot):
    rng = make_rng(21)
    boxes = [Cuboid(tf.translation(0.55, 0.0, 0.45), np.array([0.08, 0.25, 0.02]))]
    world = CollisionWorld(cuboids=boxes, triangles=np.empty((0, 3, 3)))
    q0 = robot.chain.neutral
    g = q0 + np.array([0.4, 0.1, -0.2, 0.1, 0.0, 0.2, 0.0])
    obs = assemble_observation(scene_cloud(world, 6000, rng), robot, q0, g, None, rng, n_obstacle=1024)
    return world, q0, g, obs


def test_gmm_validation():
    w = np.full(5, 0.2)
    m = np.zeros((5, 7))
    s = np.ones((5, 7))
    GmmAction(w, m, s)
    with pytest.raises(ValueError):
        GmmAction(np.full(4, 0.25), m[:4], s[:4])
    with pytest.raises(ValueError):
        GmmAction(w * 2, m, s)
    with pytest.raises(ValueError):
        GmmAction(w, m, np.zeros((5, 7)))
    a = GmmAction(w, m, s)
    b = GmmAction.from_dict(a.to_dict())
    assert np.array_equal(a.means, b.means) and np.array_equal(a.weights, b.weights)


def test_clamp_preserves_direction():
    dq = np.array([0.3, -0.1, 0, 0, 0, 0, 0.05])
    c = clamp_action(dq)
    assert np.max(np.abs(c)) == pytest.approx(ACTION_BOUND)
    assert np.allclose(c / np.linalg.norm(c), dq / np.linalg.norm(dq))
    small = np.full(7, 0.01)
    assert np.array_equal(clamp_action(small), small)


def test_gmm_sampling_statistics():
    means = np.zeros((5, 7))
    means[0, 0], means[1, 0] = 0.05, -0.05
    w = np.array([0.7, 0.3, 0.0, 0.0, 0.0])
    a = GmmAction(w, means, np.full((5, 7), 0.005))
    rng = make_rng(0)
    x = np.array([sample_gmm(a, rng) for _ in range(4000)])
    assert np.mean(x[:, 0] > 0) == pytest.approx(0.7, abs=0.03)
    assert np.mean(x[:, 0]) == pytest.approx(0.7 * 0.05 - 0.3 * 0.05, abs=0.002)
    assert np.std(x[x[:, 0] > 0, 1]) == pytest.approx(0.005, rel=0.1)
    assert np.all(np.max(np.abs(x), axis=1) <= ACTION_BOUND + 1e-12)


def test_zero_proposer_stays(robot, scene_obs):
    _, q0, g, obs = scene_obs
    res = rollout(ConstantProposer(), q0, g, obs, 5, make_rng(0))
    assert len(res.trajectory) == 6 and res.steps == 5 and not res.reached_goal
    assert np.allclose(res.trajectory.waypoints, q0)


def test_greedy_reaches_goal(robot, scene_obs):
    _, q0, g, obs = scene_obs
    res = rollout(GreedyProposer(), q0, g, obs, 20, make_rng(0))
    assert res.reached_goal
    assert res.steps == int(np.ceil(np.max(np.abs(g - q0)) / ACTION_BOUND))
    assert np.max(np.abs(res.trajectory.end - g)) <= 0.01
    with pytest.raises(ValueError):
        rollout(GreedyProposer(), q0, g, obs, 0, make_rng(0))


def test_rollout_starts_at_goal(scene_obs):
    _, q0, _, obs = scene_obs
    res = rollout(GreedyProposer(), q0, q0, obs, 10, make_rng(0))
    assert res.reached_goal and res.steps == 0 and len(res.trajectory) == 1


def test_score_matches_oracle(robot, rng):
    pts = rng.uniform([0.2, -0.4, 0.0], [0.8, 0.4, 1.0], size=(150, 3))
    w = robot.chain.neutral + rng.normal(0, 0.3, (3, 7))
    c, r = sphere_centers_batch(robot.chain, robot.spheres, forward_kinematics_batch(robot.chain, w))
    expect = trajectory_score(list(zip(c, [r] * len(c))), pts, 0.01)
    assert score_trajectory(w, pts, robot, eps=0.01) == expect
    assert waypoint_scores(w, pts, robot).sum() == expect
    with pytest.raises(ValueError):
        score_trajectory(w, pts, robot, eps=0.0)


def test_tto_argmin_and_ties(robot, scene_obs):
    _, q0, g, obs = scene_obs
    prop = GreedyProposer(std=0.03)
    res = tto_select(prop, q0, g, obs, 15, make_rng(5), N=12, keep_rollouts=True)
    assert res.scores[res.index] == res.scores.min()
    assert res.index == int(np.flatnonzero(res.scores == res.scores.min())[0])
    assert len(res.rollouts) == 12 and res.best is res.rollouts[res.index]
    zero = tto_select(ConstantProposer(), q0, g, obs, 3, make_rng(5), N=4)
    assert zero.index == 0 and len(set(zero.scores.tolist())) == 1
    with pytest.raises(ValueError):
        tto_select(prop, q0, g, obs, 3, make_rng(5), N=0)


def test_tto_parallel_matches_serial(robot, scene_obs):
    _, q0, g, obs = scene_obs
    prop = GreedyProposer(std=0.03)
    a = tto_select(prop, q0, g, obs, 10, make_rng(8), N=6, n_jobs=1)
    b = tto_select(prop, q0, g, obs, 10, make_rng(8), N=6, n_jobs=2)
    assert a.index == b.index and np.array_equal(a.scores, b.scores)
    assert np.array_equal(a.best.trajectory.waypoints, b.best.trajectory.waypoints)


def test_noisy_expert(robot, scene_obs):
    world, q0, g, obs = scene_obs
    w = np.linspace(q0, g, 9)
    expert = Trajectory(w, 0.1)
    res = rollout(NoisyExpertProposer(expert, 0.0), q0, g, obs, 30, make_rng(0))
    assert res.reached_goal
    assert np.allclose(res.trajectory.waypoints[:9], w)
    zero = NoisyExpertProposer(expert, 0.02, past_end="zero")
    act = zero.propose(obs, g, g, [], 20)
    assert np.allclose(act.means[0], 0.0) and np.allclose(act.stds[0], 0.02)


def test_trace_proposer_round_trip(tmp_path, scene_obs):
    _, q0, g, obs = scene_obs
    acts = tuple(GmmAction.single(np.full(7, 0.01 * k), 1e-9) for k in range(3))
    path = TraceProposer(acts).save(tmp_path / "t.jsonl")
    back = TraceProposer.load(path)
    assert len(back.actions) == 3
    res = rollout(back, q0, g, obs, 5, make_rng(0))
    assert np.allclose(res.trajectory.waypoints[3] - q0, 0.03, atol=1e-6)
    assert np.allclose(res.trajectory.waypoints[5], res.trajectory.waypoints[3], atol=1e-6)


def test_execute_open_loop(robot, scene_obs):
    world, q0, g, obs = scene_obs
    res = rollout(GreedyProposer(), q0, g, obs, 20, make_rng(0))
    rec = execute_open_loop(res, g, world, robot)
    hits = ground_truth_collisions(CollisionChecker(robot, world), res.trajectory.waypoints)
    assert rec.ground_truth_collisions == hits
    assert rec.success == (rec.reached_goal and hits == 0)


# ----------------------------------------------------------------------------
# metrics


def _offset_config(robot, g, dx):
    """A configuration whose EE sits ``dx`` from that of ``g`` (found by IK)."""
    from mpforge.robot import EePose, ee_transform, inverse_kinematics

    T = ee_transform(robot.chain, g)
    T[0, 3] += dx
    res = inverse_kinematics(robot.chain, EePose.from_matrix(T), g, rng=make_rng(0))
    assert res.success
    return res.q


def test_position_boundary(robot):
    g = robot.chain.neutral
    empty = CollisionWorld(cuboids=[], triangles=np.empty((0, 3, 3)))
    inside = _offset_config(robot, g, 0.0095)
    outside = _offset_config(robot, g, 0.0105)
    assert evaluate([inside], g, empty, robot).success
    assert not evaluate([outside], g, empty, robot).success


def test_rotation_boundary(robot):
    g = robot.chain.neutral
    empty = CollisionWorld(cuboids=[], triangles=np.empty((0, 3, 3)))
    for deg, ok in ((14.5, True), (15.5, False)):
        q = g.copy()
        q[6] += np.radians(deg)
        pos, rot = ee_errors(robot.chain, q, g)
        assert pos < 1e-9 and rot == pytest.approx(deg)
        assert evaluate([q], g, empty, robot).success == ok
    q = g.copy()
    q[6] += np.pi
    assert ee_errors(robot.chain, q, g)[1] == pytest.approx(180.0)
    assert ee_errors(robot.chain, q, g, flip180=True)[1] == pytest.approx(0.0, abs=1e-6)


def test_collision_fails_evaluation(robot):
    g = robot.chain.neutral
    from mpforge.robot import ee_transform

    p = ee_transform(robot.chain, g)[:3, 3]
    world = CollisionWorld(cuboids=[Cuboid(tf.translation(*p), np.full(3, 0.03))], triangles=np.empty((0, 3, 3)))
    rep = evaluate([g], g, world, robot)
    assert rep.ground_truth_collisions == 1 and not rep.success and rep.safety_violation
