import numpy as np
import pytest

from mpforge import transforms as tf
from mpforge.cloudsim import (
    LABELS,
    EmptyWorldWarning,
    assemble_observation,
    export_observation,
    read_ply,
    robot_cloud,
    sample_world_surface,
    scene_cloud,
    subsample_obstacles,
    update_observation,
    write_ply,
)
from mpforge.collision import CollisionWorld, min_sdf, robot_min_sdf
from mpforge.geometry import Cuboid
from mpforge.rng import make_rng
from mpforge.robot import AttachedObject, forward_kinematics, sphere_centers_batch
from oracles import box_sdf


def _world(rng, k=3):
    boxes = [
        Cuboid(tf.make_transform(tf.matrix_from_quat(rng.normal(size=4)), rng.uniform(0.4, 0.8, 3)), rng.uniform(0.05, 0.2, 3))
        for _ in range(k)
    ]
    return CollisionWorld(cuboids=boxes, triangles=np.empty((0, 3, 3)))


def test_surface_points_on_surface(rng):
    world = _world(rng)
    pts, prim, face, nrm = sample_world_surface(world, 2000, rng, return_details=True)
    assert pts.shape == (2000, 3)
    for p, i in zip(pts[:200], prim[:200]):
        b = world.cuboids[i]
        assert abs(box_sdf(p, b.center, b.rotation, b.half_extents)) < 1e-9
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    assert np.all((face >= 0) & (face < 6))


def test_surface_sampling_area_proportional():
    big = Cuboid(tf.translation(0.5, 0, 0.5), np.array([0.2, 0.2, 0.2]))
    small = Cuboid(tf.translation(-0.5, 0, 0.5), np.array([0.1, 0.1, 0.1]))
    world = CollisionWorld(cuboids=[big, small], triangles=np.empty((0, 3, 3)))
    _, prim, _, _ = sample_world_surface(world, 20000, make_rng(0), return_details=True)
    assert np.mean(prim == 0) == pytest.approx(0.8, abs=0.02)


def test_triangle_points(rng):
    tri = np.array([[[0.5, 0, 0], [0.7, 0, 0], [0.5, 0.2, 0.1]]])
    world = CollisionWorld(cuboids=[], triangles=tri)
    pts = sample_world_surface(world, 300, rng)
    n = np.cross(tri[0, 1] - tri[0, 0], tri[0, 2] - tri[0, 0])
    assert np.allclose((pts - tri[0, 0]) @ n, 0.0, atol=1e-12)


def test_empty_world_warns(rng):
    world = CollisionWorld(cuboids=[], triangles=np.empty((0, 3, 3)))
    with pytest.warns(EmptyWorldWarning):
        assert sample_world_surface(world, 10, rng).shape == (0, 3)
    with pytest.raises(ValueError):
        sample_world_surface(world, -1, rng)


def test_partial_and_noise(rng):
    world = _world(rng, 5)
    full = scene_cloud(world, 4000, make_rng(1))
    part = scene_cloud(world, 4000, make_rng(1), partial=True)
    assert 0 < len(part) < len(full)
    noisy = scene_cloud(world, 4000, make_rng(1), noise_std=0.01)
    assert np.std(noisy - full) == pytest.approx(0.01, rel=0.1)


def test_robot_cloud_on_outer_surface(robot, rng):
    q = robot.chain.neutral
    pts = robot_cloud(robot, q, None, 2048, rng)
    assert pts.shape == (2048, 3)
    frames = forward_kinematics(robot.chain, q)[None]
    c, r = sphere_centers_batch(robot.chain, robot.spheres, frames)
    d = min_sdf(pts, c[0], r)
    assert np.all(np.abs(d) < 1e-9)


def test_robot_cloud_with_object(robot, rng):
    obj = AttachedObject("box", (0.05, 0.05, 0.05), tf.translation(0, 0, 0.05))
    pts, idx = robot_cloud(robot, robot.chain.neutral, obj, 2048, rng, return_index=True)
    assert len(pts) == 2048
    assert 0 < np.sum(idx == -1) < 2048


def test_segmentation_and_counts(robot, rng):
    world = _world(rng, 4)
    cloud = scene_cloud(world, 8000, rng)
    q, g = robot.chain.neutral, robot.chain.neutral + 0.2
    near = robot_cloud(robot, q, None, 500, rng)
    obs = assemble_observation(np.concatenate([cloud, near]), robot, q, g, None, rng, n_obstacle=4096)
    assert len(obs.obstacle_points) == 4096 and not obs.padded
    assert np.all(robot_min_sdf(robot, q, obs.obstacle_points) >= 0.01 - 1e-9)
    assert len(obs.robot_points) == 2048 and len(obs.goal_points) == 2048
    pts, lab = obs.points_and_labels()
    assert len(pts) == len(lab) == 2048 * 2 + 4096
    assert set(np.unique(lab)) == set(LABELS.values())


def test_padding_flagged(rng):
    pts = rng.uniform(size=(10, 3))
    out, padded = subsample_obstacles(pts, 25, rng)
    assert padded and len(out) == 25 and np.array_equal(out[:10], pts)
    out, padded = subsample_obstacles(pts, 5, rng)
    assert not padded and len(out) == 5
    assert subsample_obstacles(np.empty((0, 3)), 5, rng)[0].shape == (0, 3)


def test_update_observation_keeps_scene(robot, rng):
    world = _world(rng)
    q, g = robot.chain.neutral, robot.chain.neutral + 0.2
    obs = assemble_observation(scene_cloud(world, 6000, rng), robot, q, g, None, rng)
    q2 = q + 0.05
    nxt = update_observation(obs, q, q2)
    assert nxt.obstacle_points is obs.obstacle_points and nxt.goal_points is obs.goal_points
    assert np.array_equal(nxt.q, q2)
    again = update_observation(obs, q, q2)
    assert np.array_equal(nxt.robot_points, again.robot_points)
    with pytest.raises(ValueError):
        update_observation(obs, q2, q)


def test_ply_round_trip(tmp_path, robot, rng):
    pts = rng.normal(size=(50, 3))
    lab = rng.integers(0, 3, 50)
    p = write_ply(tmp_path / "c.ply", pts, lab)
    back, bl = read_ply(p)
    assert np.array_equal(back, pts) and np.array_equal(bl, lab)
    world = _world(rng)
    obs = assemble_observation(scene_cloud(world, 5000, rng), robot, robot.chain.neutral, robot.chain.neutral, None, rng)
    back, bl = read_ply(export_observation(obs, tmp_path / "o.ply"))
    assert len(back) == len(bl) == 2048 * 2 + 4096
