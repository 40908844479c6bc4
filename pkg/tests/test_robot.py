import numpy as np
import pytest

from mpforge import transforms as tf
from mpforge.robot import (
    AttachedObject,
    EePose,
    JointLimitError,
    ee_pose,
    ee_transform,
    forward_kinematics,
    forward_kinematics_batch,
    inverse_kinematics,
    load_robot,
    pose_error,
    sphere_centers,
)
from oracles import dh_panda_flange


def test_zero_config_ee_matches_hand_computed_pose(robot):
    # straight-up arm: x = a4 - a5 + a7, z = d1 + d3 + d5 - flange - tcp
    T = ee_transform(robot.chain, np.zeros(7), check_limits=False)
    assert np.allclose(T[:3, 3], [0.088, 0.0, 0.333 + 0.316 + 0.384 - 0.107 - 0.1034], atol=1e-12)
    assert np.allclose(T[:3, 2], [0, 0, -1], atol=1e-12)


def test_fk_matches_dh_table(robot, rng):
    c = robot.chain
    for _ in range(200):
        q = c.random_config(rng)
        flange = forward_kinematics(c, q)[-1] @ tf.translation(0, 0, 0.107)
        assert np.allclose(flange, dh_panda_flange(q), atol=1e-12)


def test_batch_fk_equals_single(robot, rng):
    qs = np.array([robot.chain.random_config(rng) for _ in range(32)])
    batch = forward_kinematics_batch(robot.chain, qs)
    for q, F in zip(qs, batch):
        assert np.allclose(forward_kinematics(robot.chain, q), F, atol=1e-14)


def test_limits_enforced(robot):
    q = robot.chain.neutral.copy()
    q[3] = 0.5  # joint 4 upper limit is -0.0698
    with pytest.raises(JointLimitError):
        forward_kinematics(robot.chain, q)
    with pytest.raises(ValueError):
        robot.chain.check_limits(np.zeros(6))


def test_ik_round_trip(robot, rng):
    c = robot.chain
    hits = 0
    for _ in range(20):
        q = c.random_config(rng)
        target = ee_pose(c, q)
        res = inverse_kinematics(c, target, c.neutral, rng=rng)
        if res:
            hits += 1
            pe, re = pose_error(ee_pose(c, res.q), target)
            assert pe <= 1e-4 and re <= 1e-3
            assert c.within_limits(res.q)
    assert hits >= 18


def test_ik_unreachable_reports_failure(robot, rng):
    far = EePose(np.array([3.0, 0.0, 0.5]), np.array([0, 0, 0, 1.0]))
    res = inverse_kinematics(robot.chain, far, robot.chain.neutral, rng=rng, restarts=2)
    assert not res and res.q is None and res.position_error > 1.0


def test_sphere_model_shape(robot):
    centers, radii = sphere_centers(robot.chain, robot.spheres, robot.chain.neutral)
    assert centers.shape == (56, 3) and radii.shape == (56,)
    assert np.all(radii > 0)


def test_neutral_pose_is_self_collision_free(robot):
    from mpforge.collision import CollisionChecker, CollisionWorld

    assert not CollisionChecker(robot, CollisionWorld()).config_in_collision(robot.chain.neutral)


@pytest.mark.parametrize(
    "obj",
    [
        AttachedObject("box", (0.05, 0.03, 0.02)),
        AttachedObject("cylinder", (0.03, 0.2)),
        AttachedObject("sphere", (0.04,)),
    ],
)
def test_attachment_cover_contains_key_points(obj):
    c, r = obj.cover
    kp = obj.key_points()
    d = np.linalg.norm(kp[:, None] - c[None], axis=-1) - r[None]
    assert np.all(d.min(axis=1) <= 1e-9)


def test_attached_spheres_follow_the_hand(robot):
    obj = AttachedObject("sphere", (0.04,))
    q = robot.chain.neutral
    centers, radii = sphere_centers(robot.chain, robot.spheres, q, obj)
    assert len(centers) == 56 + len(obj.cover[1])
    tcp = ee_transform(robot.chain, q)[:3, 3]
    assert np.linalg.norm(centers[56:].mean(axis=0) - tcp) < 1e-9


def test_load_rejects_wrong_schema(tmp_path):
    p = tmp_path / "r.json"
    p.write_text('{"schema": "other"}')
    with pytest.raises(ValueError):
        load_robot(p)
