"""Rigid-transform and rotation helpers.

Transforms are 4x4 homogeneous numpy arrays. Quaternions use scalar-last
``(x, y, z, w)`` ordering throughout the package.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(rpy) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw, applied as Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    r, p, y = rpy
    return rot_z(y) @ rot_y(p) @ rot_x(r)


def make_transform(rotation=None, translation=None) -> np.ndarray:
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if translation is not None:
        T[:3, 3] = translation
    return T


def transform_from_xyz_rpy(xyz, rpy) -> np.ndarray:
    return make_transform(rpy_matrix(rpy), np.asarray(xyz, dtype=float))


def translation(x: float, y: float, z: float) -> np.ndarray:
    return make_transform(translation=(x, y, z))


def invert(T: np.ndarray) -> np.ndarray:
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def apply(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a transform to an ``(n, 3)`` array of points."""
    return points @ T[:3, :3].T + T[:3, 3]


def axis_angle_matrices(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Batched Rodrigues rotation about a fixed unit ``axis``; returns ``(B, 3, 3)``."""
    angles = np.asarray(angles, dtype=float)
    k = np.asarray(axis, dtype=float)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    s = np.sin(angles)[:, None, None]
    c = np.cos(angles)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    q = Rotation.from_matrix(R).as_quat()
    return q / np.linalg.norm(q)


def matrix_from_quat(q) -> np.ndarray:
    return Rotation.from_quat(np.asarray(q, dtype=float)).as_matrix()


def quat_angle(q1, q2) -> float:
    """Geodesic angle (radians) between two unit quaternions."""
    d = abs(float(np.dot(q1, q2)))
    d = min(1.0, d)
    return 2.0 * float(np.arccos(d))


def rotation_error_vector(R_target: np.ndarray, R_current: np.ndarray) -> np.ndarray:
    """Axis-angle vector (world frame) rotating ``R_current`` onto ``R_target``."""
    return Rotation.from_matrix(R_target @ R_current.T).as_rotvec()


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix (axis times angle)."""
    cos = min(1.0, max(-1.0, 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)))
    angle = float(np.arccos(cos))
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-6:
        return 0.5 * v
    if np.pi - angle < 1e-4:
        return Rotation.from_matrix(R).as_rotvec()
    return angle / (2.0 * np.sin(angle)) * v
