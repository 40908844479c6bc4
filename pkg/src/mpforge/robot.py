"""Kinematic chain, sphere collision model and forward/inverse kinematics.

The arm is described by a JSON robot-description file (see
``mpforge/data/panda.json``). Link ``0`` is the fixed base; link ``i`` for
``i >= 1`` is the body moved by joint ``i - 1``. The end-effector frame is the
tool-centre point between the fingers, rigidly attached to the last link.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from . import transforms as tf

SCHEMA = "mpforge.robot/1"
N_JOINTS = 7


class JointLimitError(ValueError):
    """Raised when a joint configuration lies outside the chain's limits."""


@dataclass(frozen=True, eq=False)
class KinematicChain:
    name: str
    base: np.ndarray
    joint_origins: np.ndarray  # (7, 4, 4) parent-relative fixed transforms
    joint_axes: np.ndarray  # (7, 3) unit axes in the joint frame
    lower: np.ndarray
    upper: np.ndarray
    velocity_limits: np.ndarray
    acceleration_limits: np.ndarray
    ee_offset: np.ndarray
    neutral: np.ndarray
    link_names: tuple = ()

    def __post_init__(self):
        if self.joint_origins.shape != (N_JOINTS, 4, 4):
            raise ValueError("a chain needs exactly 7 actuated revolute joints")
        if not np.all(self.lower < self.upper):
            raise ValueError("every joint needs lower < upper")
        norms = np.linalg.norm(self.joint_axes, axis=1)
        if not np.allclose(norms, 1.0):
            raise ValueError("joint axes must be unit vectors")

    @property
    def n_links(self) -> int:
        return N_JOINTS + 1

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def check_limits(self, q, tol: float = 1e-9) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} joint values, got shape {q.shape}")
        bad = (q < self.lower - tol) | (q > self.upper + tol)
        if np.any(bad):
            idx = np.argwhere(bad)[:, -1].tolist()
            raise JointLimitError(f"joint(s) {sorted(set(idx))} outside limits")
        return q

    def clip(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def random_config(self, rng) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class SphereModel:
    link_index: np.ndarray  # (n,) int
    offsets: np.ndarray  # (n, 3) metres, in the link frame
    radii: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.radii)

    def __post_init__(self):
        n = len(self.radii)
        if self.offsets.shape != (n, 3) or self.link_index.shape != (n,):
            raise ValueError("sphere arrays disagree in length")
        if np.any(self.radii <= 0):
            raise ValueError("sphere radii must be positive")


@dataclass(frozen=True, eq=False)
class RobotDescription:
    chain: KinematicChain
    spheres: SphereModel
    # link pairs excluded from self-collision checking
    self_collision_ignore: frozenset = frozenset()
    # links allowed to touch an attached object (hand and wrist)
    attachment_ignore: frozenset = frozenset()
    source: str = ""

    @cached_property
    def self_collision_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays ``(i, j)`` of sphere pairs that must not overlap."""
        li = self.spheres.link_index
        ii, jj = np.triu_indices(len(li), k=1)
        a, b = li[ii], li[jj]
        keep = a != b
        for x, y in self.self_collision_ignore:
            keep &= ~(((a == x) & (b == y)) | ((a == y) & (b == x)))
        return ii[keep], jj[keep]


def _pair_set(pairs) -> frozenset:
    return frozenset(tuple(sorted(p)) for p in pairs)


def load_robot(path=None) -> RobotDescription:
    """Load a robot description; defaults to the bundled Panda description."""
    if path is None:
        text = resources.files("mpforge.data").joinpath("panda.json").read_text()
        source = "mpforge.data/panda.json"
    else:
        text = Path(path).read_text()
        source = str(path)
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported robot description schema {doc.get('schema')!r}")
    joints = doc["joints"]
    if len(joints) != N_JOINTS:
        raise ValueError("robot description must list exactly 7 joints")
    origins = np.stack([tf.transform_from_xyz_rpy(j["xyz"], j["rpy"]) for j in joints])
    axes = np.array([j["axis"] for j in joints], dtype=float)
    chain = KinematicChain(
        name=doc["name"],
        base=tf.transform_from_xyz_rpy(doc["base"]["xyz"], doc["base"]["rpy"]),
        joint_origins=origins,
        joint_axes=axes,
        lower=np.array([j["lower"] for j in joints], dtype=float),
        upper=np.array([j["upper"] for j in joints], dtype=float),
        velocity_limits=np.array([j["velocity"] for j in joints], dtype=float),
        acceleration_limits=np.array([j["acceleration"] for j in joints], dtype=float),
        ee_offset=tf.transform_from_xyz_rpy(doc["ee_offset"]["xyz"], doc["ee_offset"]["rpy"]),
        neutral=np.array(doc["neutral"], dtype=float),
        link_names=tuple(doc["links"]),
    )
    sph = doc["spheres"]
    spheres = SphereModel(
        link_index=np.array([s["link"] for s in sph], dtype=int),
        offsets=np.array([s["center"] for s in sph], dtype=float),
        radii=np.array([s["radius"] for s in sph], dtype=float),
    )
    return RobotDescription(
        chain=chain,
        spheres=spheres,
        self_collision_ignore=_pair_set(doc.get("self_collision_ignore", [])),
        attachment_ignore=frozenset(doc.get("attachment_ignore", [])),
        source=source,
    )


# ----------------------------------------------------------------------------
# forward kinematics


def forward_kinematics(chain: KinematicChain, q, check_limits: bool = True) -> np.ndarray:
    """World transforms of every link, shape ``(8, 4, 4)``, composed root to tip.

    Raises:
        JointLimitError: if ``check_limits`` and ``q`` is outside the limits.
    """
    q = np.asarray(q, dtype=float)
    if check_limits:
        chain.check_limits(q)
    return forward_kinematics_batch(chain, q[None, :])[0]


def _joint_terms(chain: KinematicChain) -> np.ndarray:
    """Constant, sine and cosine parts of ``origin_i @ Rot(axis_i, q)``, shape ``(3, 7, 4, 4)``.

    Rodrigues gives ``R = I + K^2 + sin(q) K - cos(q) K^2``, so each joint
    transform is affine in ``(sin q, cos q)``.
    """
    cached = chain.__dict__.get("_fk_terms")
    if cached is not None:
        return cached
    terms = np.zeros((3, N_JOINTS, 4, 4))
    for i, k in enumerate(chain.joint_axes):
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        parts = np.zeros((3, 4, 4))
        parts[0, :3, :3] = np.eye(3) + K @ K
        parts[0, 3, 3] = 1.0
        parts[1, :3, :3] = K
        parts[2, :3, :3] = -K @ K
        terms[:, i] = chain.joint_origins[i] @ parts
    object.__setattr__(chain, "_fk_terms", terms)
    return terms


def forward_kinematics_batch(chain: KinematicChain, qs) -> np.ndarray:
    """Vectorised FK for ``(B, 7)`` configurations -> ``(B, 8, 4, 4)``. No limit check."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    B = qs.shape[0]
    A0, A1, A2 = _joint_terms(chain)
    local = A0 + np.sin(qs)[..., None, None] * A1 + np.cos(qs)[..., None, None] * A2  # (B, 7, 4, 4)
    out = np.empty((B, chain.n_links, 4, 4))
    out[:, 0] = chain.base
    for i in range(N_JOINTS):
        out[:, i + 1] = out[:, i] @ local[:, i]
    return out


@dataclass(frozen=True)
class EePose:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (x, y, z, w)

    def __post_init__(self):
        quat = np.asarray(self.orientation, dtype=float)
        object.__setattr__(self, "orientation", quat / np.linalg.norm(quat))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "EePose":
        return cls(T[:3, 3].copy(), tf.quat_from_matrix(T[:3, :3]))

    def matrix(self) -> np.ndarray:
        return tf.make_transform(tf.matrix_from_quat(self.orientation), self.position)


def ee_transform(chain: KinematicChain, q, check_limits: bool = True) -> np.ndarray:
    return forward_kinematics(chain, q, check_limits)[-1] @ chain.ee_offset


def ee_pose(chain: KinematicChain, q, check_limits: bool = True) -> EePose:
    return EePose.from_matrix(ee_transform(chain, q, check_limits))


def pose_error(a: EePose, b: EePose) -> tuple[float, float]:
    """Position error (m) and geodesic rotation error (rad) between two poses."""
    return float(np.linalg.norm(a.position - b.position)), tf.quat_angle(a.orientation, b.orientation)


def _fk_single(chain: KinematicChain, q) -> list:
    """Unchecked single-configuration FK as a list of 8 link transforms."""
    frames = [chain.base]
    T = chain.base
    for i in range(N_JOINTS):
        k = chain.joint_axes[i]
        c, s = np.cos(q[i]), np.sin(q[i])
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        R = np.eye(4)
        R[:3, :3] += s * K + (1.0 - c) * (K @ K)
        T = T @ chain.joint_origins[i] @ R
        frames.append(T)
    return frames


def geometric_jacobian(chain: KinematicChain, q) -> tuple[np.ndarray, np.ndarray]:
    """6x7 Jacobian (linear rows first) of the end-effector, plus its transform."""
    frames = np.stack(_fk_single(chain, np.asarray(q, dtype=float))[1:])
    T_ee = frames[-1] @ chain.ee_offset
    w = np.einsum("nij,nj->ni", frames[:, :3, :3], chain.joint_axes)
    r = T_ee[:3, 3] - frames[:, :3, 3]
    J = np.empty((6, N_JOINTS))
    J[0] = w[:, 1] * r[:, 2] - w[:, 2] * r[:, 1]
    J[1] = w[:, 2] * r[:, 0] - w[:, 0] * r[:, 2]
    J[2] = w[:, 0] * r[:, 1] - w[:, 1] * r[:, 0]
    J[3:] = w.T
    return J, T_ee


# ----------------------------------------------------------------------------
# inverse kinematics


@dataclass
class IKResult:
    success: bool
    q: np.ndarray | None
    position_error: float
    rotation_error: float
    iterations: int
    restarts: int

    def __bool__(self) -> bool:
        return self.success


def _ik_descend(chain, T_target, q, max_iters, tol_pos, tol_rot, damping):
    lam2 = damping**2
    pos_err = rot_err = np.inf
    checkpoint = np.inf
    for it in range(max_iters + 1):
        J, T = geometric_jacobian(chain, q)
        e_pos = T_target[:3, 3] - T[:3, 3]
        e_rot = tf.rotation_log(T_target[:3, :3] @ T[:3, :3].T)
        pos_err, rot_err = float(np.linalg.norm(e_pos)), float(np.linalg.norm(e_rot))
        if pos_err <= tol_pos and rot_err <= tol_rot:
            return q, pos_err, rot_err, it, True
        if it == max_iters:
            break
        if it % 25 == 0:
            # abandon descents that stall far from the target
            if it > 0 and pos_err + rot_err > 0.5 * checkpoint:
                break
            checkpoint = pos_err + rot_err
        e = np.concatenate([e_pos, e_rot])
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
        step = np.max(np.abs(dq))
        if step > 0.5:
            dq *= 0.5 / step
        q = chain.clip(q + dq)
    return q, pos_err, rot_err, max_iters, False


def inverse_kinematics(
    chain: KinematicChain,
    target: EePose,
    seed,
    max_iters: int = 100,
    tol_pos: float = 1e-4,
    tol_rot: float = 1e-3,
    rng=None,
    restarts: int = 20,
    damping: float = 0.05,
) -> IKResult:
    """Damped least-squares IK on the 6-DOF pose error with random restarts.

    Never raises on non-convergence; the returned :class:`IKResult` carries
    ``success=False`` and the best residual seen. Restart seeds are drawn
    uniformly within the joint limits from ``rng`` (a fresh default generator
    when omitted).
    """
    if tol_pos <= 0 or tol_rot <= 0:
        raise ValueError("IK tolerances must be positive")
    T_target = target.matrix()
    q = chain.clip(np.asarray(seed, dtype=float))
    best = (np.inf, np.inf, None, 0)
    total = 0
    for attempt in range(restarts + 1):
        if attempt > 0:
            if rng is None:
                rng = np.random.default_rng()
            q = chain.random_config(rng)
        q_out, pe, re, iters, ok = _ik_descend(chain, T_target, q, max_iters, tol_pos, tol_rot, damping)
        total += iters
        if ok:
            return IKResult(True, q_out, pe, re, total, attempt)
        if pe + re < best[0] + best[1]:
            best = (pe, re, q_out, attempt)
    return IKResult(False, None, best[0], best[1], total, restarts)


# ----------------------------------------------------------------------------
# attached objects and sphere models


@dataclass(frozen=True, eq=False)
class AttachedObject:
    """An object rigidly held in the gripper.

    ``kind`` is ``"box"`` (``dims`` = half extents), ``"cylinder"``
    (``dims`` = radius, height; axis along local z), ``"sphere"``
    (``dims`` = radius) or ``"mesh"`` (``vertices``/``faces`` in metres).
    ``grasp_offset`` maps object coordinates into the end-effector frame.
    """

    kind: str
    dims: tuple = ()
    grasp_offset: np.ndarray = field(default_factory=lambda: np.eye(4))
    vertices: np.ndarray | None = None
    faces: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("box", "cylinder", "sphere", "mesh"):
            raise ValueError(f"unknown attached object kind {self.kind!r}")
        if self.kind == "mesh" and (self.vertices is None or self.faces is None):
            raise ValueError("mesh attachments need vertices and faces")

    def extents(self) -> np.ndarray:
        """Full axis-aligned size in the object frame."""
        if self.kind == "box":
            return 2.0 * np.asarray(self.dims, dtype=float)
        if self.kind == "cylinder":
            r, h = self.dims
            return np.array([2 * r, 2 * r, h])
        if self.kind == "sphere":
            return np.full(3, 2.0 * self.dims[0])
        return np.ptp(self.vertices, axis=0)

    @property
    def longest_dimension(self) -> float:
        return float(np.max(self.extents()))

    def key_points(self) -> np.ndarray:
        """Points that any enclosing cover must contain (box corners, cap rims, ...)."""
        if self.kind == "box":
            h = np.asarray(self.dims, dtype=float)
            signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
            return signs * h
        if self.kind == "cylinder":
            r, h = self.dims
            t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
            ring = np.stack([r * np.cos(t), r * np.sin(t), np.zeros_like(t)], axis=1)
            return np.concatenate([ring + [0, 0, -h / 2], ring + [0, 0, h / 2]])
        if self.kind == "sphere":
            r = self.dims[0]
            return np.concatenate([np.eye(3) * r, -np.eye(3) * r])
        return np.asarray(self.vertices, dtype=float)

    def surface_points(self, n: int, rng) -> np.ndarray:
        """``n`` area-uniform surface samples in the object frame."""
        from .geometry import sample_box_surface, sample_triangles

        if n <= 0:
            return np.empty((0, 3))
        if self.kind == "box":
            return sample_box_surface(np.asarray(self.dims, dtype=float), n, rng)
        if self.kind == "sphere":
            v = rng.normal(size=(n, 3))
            return self.dims[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
        if self.kind == "cylinder":
            r, h = self.dims
            side, cap = 2 * np.pi * r * h, np.pi * r * r
            which = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
            t = rng.uniform(0, 2 * np.pi, n)
            rad = np.where(which == 0, r, r * np.sqrt(rng.uniform(0, 1, n)))
            z = np.where(which == 0, rng.uniform(-h / 2, h / 2, n), np.where(which == 1, -h / 2, h / 2))
            return np.stack([rad * np.cos(t), rad * np.sin(t), z], axis=1)
        tri = np.asarray(self.vertices, dtype=float)[np.asarray(self.faces)]
        return sample_triangles(tri, n, rng)

    @cached_property
    def cover(self) -> tuple[np.ndarray, np.ndarray]:
        """Conservative sphere cover ``(centers, radii)`` in the object frame."""
        return greedy_sphere_cover(self)


def greedy_sphere_cover(obj: AttachedObject, max_radius: float = 0.10, spacing: float = 0.01):
    """Greedily place spheres of radius <= ``max_radius`` until every sample is enclosed.

    Samples are the object's key points plus a surface sampling at roughly
    ``spacing`` resolution; each radius is padded by ``spacing`` so the
    continuous surface between samples stays inside the cover.
    """
    rng = np.random.Generator(np.random.Philox(0))
    ext = obj.extents()
    area = 2 * (ext[0] * ext[1] + ext[1] * ext[2] + ext[0] * ext[2])
    n = int(np.clip(area / spacing**2, 64, 4000))
    pts = np.concatenate([obj.key_points(), obj.surface_points(n, rng)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    bound = float(np.max(np.linalg.norm(pts - center, axis=1)))
    pad = min(spacing / 2, 0.005)
    if bound + pad <= max_radius:
        return center[None, :], np.array([bound + pad])
    r = max_radius - pad
    g = [np.linspace(lo[k], hi[k], max(2, int(np.ceil((hi[k] - lo[k]) / (0.5 * r))) + 1)) for k in range(3)]
    cand = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1).reshape(-1, 3)
    cand = np.concatenate([cand, pts])
    uncovered = np.ones(len(pts), dtype=bool)
    centers, radii = [], []
    while uncovered.any():
        up = pts[uncovered]
        d = np.linalg.norm(cand[:, None, :] - up[None, :, :], axis=2)
        gain = (d <= r).sum(axis=1)
        c = cand[int(np.argmax(gain))]
        covered = np.linalg.norm(pts - c, axis=1) <= r
        rr = float(np.max(np.linalg.norm(pts[covered & uncovered] - c, axis=1)))
        centers.append(c)
        radii.append(min(max_radius, max(rr + pad, 0.02)))
        uncovered &= ~covered
    return np.array(centers), np.array(radii)


def sphere_centers(
    chain: KinematicChain,
    model: SphereModel,
    q,
    attached: AttachedObject | None = None,
    check_limits: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """World sphere centres and radii at ``q``; attachment cover spheres last."""
    frames = forward_kinematics(chain, q, check_limits)
    centers, radii = sphere_centers_batch(chain, model, frames[None], attached)
    return centers[0], radii


def sphere_centers_batch(chain, model, frames, attached=None):
    """Sphere centres for a ``(B, 8, 4, 4)`` stack of link frames -> ``(B, n, 3)``, ``(n,)``."""
    F = frames[:, model.link_index]  # (B, n, 4, 4)
    centers = np.einsum("bnij,nj->bni", F[:, :, :3, :3], model.offsets) + F[:, :, :3, 3]
    radii = model.radii
    if attached is not None:
        c_obj, r_obj = attached.cover
        T = frames[:, -1] @ chain.ee_offset @ attached.grasp_offset  # (B, 4, 4)
        extra = np.einsum("bij,nj->bni", T[:, :3, :3], c_obj) + T[:, None, :3, 3]
        centers = np.concatenate([centers, extra], axis=1)
        radii = np.concatenate([radii, r_obj])
    return centers, radii
