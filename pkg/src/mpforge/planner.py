"""Expert motion planning, smoothing and trajectory augmentation.

The expert tries the straight joint-space edge first, then grows two trees
with RRT-Connect until they meet, then refines the solution anytime with
informed RRT* (samples restricted to the ellipsoid whose foci are the start
and goal and whose transverse diameter is the current best cost). Path cost
is the Euclidean joint-space length.

Planning can be bounded by wall-clock seconds, by iteration counts, or by
both. Iteration-only budgets make results reproducible bit for bit, which
the dataset generator relies on.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .collision import CollisionChecker, CollisionWorld, interpolate_configs
from .rng import make_rng
from .robot import KinematicChain, RobotDescription, geometric_jacobian
from .scenegen.problems import PlanningProblem

EDGE_RESOLUTION = 0.05
MAX_SPACING = 0.1
MAX_WAYPOINTS = 50
GOAL_TOL = 1e-6
LOCAL_BIAS = 0.5  # share of samples drawn around existing tree nodes
LOCAL_STD = 0.8
RETREAT_STEP = 0.02  # m of end-effector travel per retreat step
RETREAT_DIST = 0.3
RETREAT_JOINT_STEP = 0.05  # rad, max-norm cap per retreat step


class PlanStatus(str, enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"
    FAILURE = "failure"


class PlanningError(ValueError):
    """Invalid planning request, such as a start configuration in collision."""


class SmoothingFailure(RuntimeError):
    """The path cannot be resampled within the waypoint and spacing bounds."""


def path_cost(waypoints) -> float:
    w = np.asarray(waypoints, dtype=float)
    if len(w) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class Path:
    waypoints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "waypoints", np.asarray(self.waypoints, dtype=float).reshape(-1, 7))

    @property
    def cost(self) -> float:
        return path_cost(self.waypoints)

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Waypoints with per-step deltas; ``dt`` is the re-timed step duration in seconds."""

    waypoints: np.ndarray
    dt: float = 0.0
    method: str = "spline"  # "spline", "linear" or "raw"

    def __post_init__(self):
        object.__setattr__(self, "waypoints", np.asarray(self.waypoints, dtype=float).reshape(-1, 7))

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.waypoints, axis=0)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def cost(self) -> float:
        return path_cost(self.waypoints)

    def __len__(self) -> int:
        return len(self.waypoints)

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and np.array_equal(self.waypoints, other.waypoints)
            and self.dt == other.dt
            and self.method == other.method
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PlanResult:
    status: PlanStatus
    path: Path | None
    reached: np.ndarray | None
    planning_time: float
    cost: float
    cost_history: tuple = ()  # (iteration, best cost) after each improvement
    iterations: int = 0


# ----------------------------------------------------------------------------
# trees


class _Tree:
    def __init__(self, root, capacity: int = 1024):
        self.q = np.empty((capacity, 7))
        self.parent = np.full(capacity, -1, dtype=int)
        self.cost = np.zeros(capacity)
        self.children: list[list[int]] = []
        self.n = 0
        self.add(root, -1, 0.0)

    def add(self, q, parent: int, cost: float) -> int:
        if self.n == len(self.q):
            self.q = np.concatenate([self.q, np.empty_like(self.q)])
            self.parent = np.concatenate([self.parent, np.full(len(self.parent), -1, dtype=int)])
            self.cost = np.concatenate([self.cost, np.zeros(len(self.cost))])
        i = self.n
        self.q[i], self.parent[i], self.cost[i] = q, parent, cost
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    def nearest(self, q) -> int:
        d = self.q[: self.n] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def k_nearest(self, q, k: int) -> np.ndarray:
        d = np.linalg.norm(self.q[: self.n] - q, axis=1)
        if k >= self.n:
            return np.argsort(d, kind="stable")
        idx = np.argpartition(d, k)[:k]
        return idx[np.argsort(d[idx], kind="stable")]

    def branch(self, i: int) -> np.ndarray:
        out = []
        while i >= 0:
            out.append(self.q[i])
            i = self.parent[i]
        return np.array(out[::-1])

    def reparent(self, i: int, new_parent: int, new_cost: float):
        old = self.parent[i]
        if old >= 0:
            self.children[old].remove(i)
        self.parent[i] = new_parent
        self.children[new_parent].append(i)
        delta = new_cost - self.cost[i]
        stack = [i]
        while stack:
            j = stack.pop()
            self.cost[j] += delta
            stack.extend(self.children[j])


def _steer(q_from, q_to, step: float):
    d = q_to - q_from
    n = float(np.linalg.norm(d))
    if n <= step:
        return q_to.copy(), True
    return q_from + d * (step / n), False


class _Budget:
    def __init__(self, seconds: float | None, t0: float):
        self.seconds, self.t0 = seconds, t0

    def expired(self) -> bool:
        return self.seconds is not None and time.perf_counter() - self.t0 >= self.seconds


def _connect(checker, tree, j, target, step, resolution):
    """Extend ``tree`` from node ``j`` toward ``target`` in ``step``-sized edges.

    The whole straight line is checked in one ordered sweep; every edge
    before the first collision is added. Returns (last node, reached).
    """
    q_from = tree.q[j].copy()
    length = float(np.linalg.norm(target - q_from))
    n_edges = max(1, int(np.ceil(length / step - 1e-12)))
    knots = [q_from + (target - q_from) * min(1.0, k * step / length) for k in range(1, n_edges)] if length > 0 else []
    knots = [q_from] + knots + [target.copy()]
    segs = [interpolate_configs(a, b, resolution)[1:] for a, b in zip(knots[:-1], knots[1:])]
    owner = np.concatenate([np.full(len(sg), k) for k, sg in enumerate(segs)])
    first = checker.first_collision(np.concatenate(segs))
    free = n_edges if first < 0 else int(owner[first])
    for k in range(free):
        j = tree.add(knots[k + 1], j, tree.cost[j] + float(np.linalg.norm(knots[k + 1] - knots[k])))
    return j, free == n_edges


def _retreat(checker, chain, tree: _Tree, resolution: float, rng, retries: int = 4, max_steps: int = 40):
    """Grow a chain from the root that backs the end-effector out along its approach axis.

    Endpoints inside cabinets and shelves are hard to leave by random sampling;
    this corridor gives both trees a cheap way out. Joint steps are capped at
    ``RETREAT_JOINT_STEP`` so the chain follows the Cartesian line near
    singularities. A blocked step is retried with random null-space motion
    before the chain stops.
    """
    q = tree.q[0].copy()
    j = 0
    travel = 0.0
    for _ in range(max_steps):
        if travel >= RETREAT_DIST:
            break
        J, T = geometric_jacobian(chain, q)
        J_pinv = J.T @ np.linalg.inv(J @ J.T + 1e-4 * np.eye(6))
        dq = J_pinv @ np.concatenate([-RETREAT_STEP * T[:3, 2], np.zeros(3)])
        scale = min(1.0, RETREAT_JOINT_STEP / max(float(np.max(np.abs(dq))), 1e-12))
        null = np.eye(7) - J_pinv @ J
        for k in range(retries + 1):
            q_new = chain.clip(q + scale * dq + (null @ rng.normal(0.0, 0.1, 7) if k else 0.0))
            if not checker.motion_in_collision(q, q_new, resolution):
                break
        else:
            break
        j = tree.add(q_new, j, tree.cost[j] + float(np.linalg.norm(q_new - q)))
        q = q_new
        travel += scale * RETREAT_STEP
    return j


def _rrt_connect(checker, chain, q0, g, rng, max_iters, budget, step, resolution, goal_valid):
    """Bidirectional search; returns (path or None, start tree, iterations)."""
    ta, tb = _Tree(q0), _Tree(g) if goal_valid else None
    trees = [ta, tb]
    for t in trees:
        if t is not None:
            _retreat(checker, chain, t, resolution, rng)
    it = 0
    while it < max_iters and not budget.expired():
        it += 1
        if tb is None:
            # goal unusable: single tree with goal bias, kept for approximate answers
            target = g if rng.uniform() < 0.1 else chain.random_config(rng)
            i = ta.nearest(target)
            q_new, _ = _steer(ta.q[i], target, step)
            if not checker.motion_in_collision(ta.q[i], q_new, resolution):
                ta.add(q_new, i, ta.cost[i] + float(np.linalg.norm(q_new - ta.q[i])))
            continue
        grow, other = trees[0], trees[1]
        if rng.uniform() < LOCAL_BIAS:
            # perturb an existing node: helps trees creep out of tight cavities
            target = chain.clip(grow.q[rng.integers(grow.n)] + rng.normal(0.0, LOCAL_STD, 7))
        else:
            target = chain.random_config(rng)
        i = grow.nearest(target)
        q_new, _ = _steer(grow.q[i], target, step)
        # keep the free prefix of a blocked step: progress inside cramped cavities
        qs = interpolate_configs(grow.q[i], q_new, resolution)
        first = checker.first_collision(qs[1:])
        if first == 0:
            trees.reverse()
            continue
        if first > 0:
            q_new = qs[first]
        a = grow.add(q_new, i, grow.cost[i] + float(np.linalg.norm(q_new - grow.q[i])))
        # connect: step the other tree toward q_new until reached or blocked
        j, reached = _connect(checker, other, other.nearest(q_new), q_new, step, resolution)
        if reached:
            ia, ib = (a, j) if grow is ta else (j, a)
            return np.concatenate([ta.branch(ia), tb.branch(ib)[::-1]]), ta, it
        trees.reverse()
    return None, ta, it


def _dedupe(path: np.ndarray) -> np.ndarray:
    keep = [0] + [k for k in range(1, len(path)) if np.any(path[k] != path[k - 1])]
    return path[keep]


def _informed_sample(chain, q0, g, c_best, rng, tries: int = 50):
    c_min = float(np.linalg.norm(g - q0))
    if not np.isfinite(c_best) or c_best <= c_min + 1e-12:
        return chain.random_config(rng)
    center = 0.5 * (q0 + g)
    a1 = (g - q0) / c_min
    U, _, Vt = np.linalg.svd(np.outer(a1, np.eye(7)[0]))
    C = U @ np.diag([1.0] * 6 + [np.linalg.det(U) * np.linalg.det(Vt.T)]) @ Vt
    r = np.full(7, 0.5 * np.sqrt(c_best**2 - c_min**2))
    r[0] = 0.5 * c_best
    for _ in range(tries):
        x = rng.normal(size=7)
        x *= rng.uniform() ** (1 / 7) / np.linalg.norm(x)
        q = C @ (r * x) + center
        if chain.within_limits(q, tol=0.0):
            return q
    return chain.random_config(rng)


def _refine(checker, chain, path, rng, max_iters, budget, step, resolution, patience, history, it0):
    """Informed RRT* seeded with the current solution as a chain of tree nodes."""
    q0, g = path[0], path[-1]
    tree = _Tree(q0)
    for k in range(1, len(path)):
        tree.add(path[k], k - 1, tree.cost[k - 1] + float(np.linalg.norm(path[k] - path[k - 1])))
    goal = len(path) - 1
    best = float(tree.cost[goal])
    c_min = float(np.linalg.norm(g - q0))
    since = 0
    it = 0
    while it < max_iters and since < patience and not budget.expired():
        it += 1
        since += 1
        if best <= c_min * (1 + 1e-3):
            break
        x = _informed_sample(chain, q0, g, best, rng)
        i = tree.nearest(x)
        q_new, _ = _steer(tree.q[i], x, step)
        k = min(tree.n, int(np.ceil(2 * np.e * np.log(tree.n + 1))))
        near = tree.k_nearest(q_new, k)
        d_near = np.linalg.norm(tree.q[near] - q_new, axis=1)
        order = np.argsort(tree.cost[near] + d_near, kind="stable")
        parent = -1
        for o in order:
            j = near[o]
            if tree.cost[j] + d_near[o] + np.linalg.norm(g - q_new) >= best:
                break
            if not checker.motion_in_collision(tree.q[j], q_new, resolution):
                parent, c_new = j, tree.cost[j] + d_near[o]
                break
        if parent < 0:
            continue
        n = tree.add(q_new, parent, c_new)
        for o in range(len(near)):
            j = near[o]
            if j == parent or tree.cost[n] + d_near[o] >= tree.cost[j] - 1e-12:
                continue
            if not checker.motion_in_collision(q_new, tree.q[j], resolution):
                tree.reparent(j, n, tree.cost[n] + d_near[o])
        if tree.cost[goal] < best - 1e-9:
            best = float(tree.cost[goal])
            history.append((it0 + it, best))
            since = 0
    return tree.branch(goal), best, it


def plan(
    problem: PlanningProblem,
    world: CollisionWorld,
    robot: RobotDescription,
    rng,
    budget: float | None = 2.0,
    max_connect_iters: int = 5000,
    max_refine_iters: int = 400,
    refine_patience: int = 150,
    step: float = 0.5,
    resolution: float = EDGE_RESOLUTION,
    shortcut_iters: int = 50,
) -> PlanResult:
    """Plan from ``problem.q0`` to ``problem.g``.

    Raises:
        PlanningError: when the start configuration is in collision.
    """
    t0 = time.perf_counter()
    chain = robot.chain
    checker = CollisionChecker(robot, world, problem.attached)
    q0, g = problem.q0.copy(), problem.g.copy()
    if checker.config_in_collision(q0):
        raise PlanningError("start configuration is in collision")
    if np.all(np.abs(g - q0) <= GOAL_TOL):
        return PlanResult(PlanStatus.EXACT, Path(q0[None]), q0, time.perf_counter() - t0, 0.0, ((0, 0.0),), 0)
    timer = _Budget(budget, t0)
    goal_valid = not checker.config_in_collision(g)
    if goal_valid and not checker.motion_in_collision(q0, g, resolution):
        c = path_cost([q0, g])
        return PlanResult(PlanStatus.EXACT, Path([q0, g]), g, time.perf_counter() - t0, c, ((0, c),), 0)
    path, tree, it = _rrt_connect(checker, chain, q0, g, rng, max_connect_iters, timer, step, resolution, goal_valid)
    if path is None:
        if tree.n <= 1:
            return PlanResult(PlanStatus.FAILURE, None, None, time.perf_counter() - t0, np.inf, (), it)
        dist = np.max(np.abs(tree.q[: tree.n] - g), axis=1)
        best = int(np.argmin(dist))
        branch = tree.branch(best)
        return PlanResult(
            PlanStatus.APPROXIMATE, Path(branch), branch[-1], time.perf_counter() - t0, path_cost(branch), (), it
        )
    path = _dedupe(path)
    history = [(it, path_cost(path))]
    path = shortcut(Path(path), checker, shortcut_iters, rng, resolution).waypoints
    if path_cost(path) < history[-1][1] - 1e-12:
        history.append((it, path_cost(path)))
    path, best, it2 = _refine(
        checker, chain, path, rng, max_refine_iters, timer, step, resolution, refine_patience, history, it
    )
    path[0], path[-1] = q0, g
    return PlanResult(
        PlanStatus.EXACT, Path(path), g, time.perf_counter() - t0, path_cost(path), tuple(history), it + it2
    )


# ----------------------------------------------------------------------------
# post-processing


def _as_checker(checker_or_world, robot=None, attached=None) -> CollisionChecker:
    if isinstance(checker_or_world, CollisionChecker):
        return checker_or_world
    return CollisionChecker(robot, checker_or_world, attached)


def shortcut(path: Path, checker: CollisionChecker, iters: int, rng, resolution: float = EDGE_RESOLUTION) -> Path:
    """Random partial shortcutting; cost never increases and endpoints stay fixed."""
    w = np.asarray(path.waypoints, dtype=float).copy()
    for _ in range(iters):
        if len(w) < 3:
            break
        seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        if s[-1] <= 0:
            break
        a, b = np.sort(rng.uniform(0, s[-1], 2))
        i = min(int(np.searchsorted(s, a, side="right")) - 1, len(seg) - 1)
        j = min(int(np.searchsorted(s, b, side="right")) - 1, len(seg) - 1)
        if j <= i:
            continue
        pa = w[i] + (a - s[i]) / max(seg[i], 1e-300) * (w[i + 1] - w[i])
        pb = w[j] + (b - s[j]) / max(seg[j], 1e-300) * (w[j + 1] - w[j])
        old = np.linalg.norm(w[i + 1] - pa) + s[j] - s[i + 1] + np.linalg.norm(pb - w[j])
        if np.linalg.norm(pb - pa) >= old - 1e-12:
            continue
        # the cut pieces of old edges are sampled afresh, so they are checked too
        if checker.path_in_collision(np.stack([w[i], pa, pb, w[j + 1]]), resolution):
            continue
        w = _dedupe(np.concatenate([w[: i + 1], [pa, pb], w[j + 1 :]]))
    w[0], w[-1] = path.waypoints[0], path.waypoints[-1]
    return Path(w)


def _linf_arclength(samples: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.max(np.abs(np.diff(samples, axis=0)), axis=1))])


def _resample_equal(samples: np.ndarray, n_steps: int) -> np.ndarray:
    """``n_steps + 1`` points at equal L-infinity arc length along a dense polyline."""
    s = _linf_arclength(samples)
    targets = np.linspace(0.0, s[-1], n_steps + 1)
    out = np.stack([np.interp(targets, s, samples[:, k]) for k in range(samples.shape[1])], axis=1)
    return out


def _linear_resample(path: np.ndarray, max_spacing: float) -> np.ndarray:
    """Linear interpolation keeping every path vertex, steps <= ``max_spacing`` per segment."""
    out = [path[:1]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, int(np.ceil(np.max(np.abs(b - a)) / max_spacing - 1e-9)))
        t = np.linspace(0, 1, n + 1)[1:, None]
        seg = a + t * (b - a)
        seg[-1] = b
        out.append(seg)
    return np.concatenate(out)


def retime(waypoints: np.ndarray, chain: KinematicChain) -> float:
    """Smallest uniform step duration keeping finite-difference velocity and acceleration in limits.

    The motion starts and ends at rest.
    """
    if len(waypoints) < 2:
        return 0.0
    d = np.diff(waypoints, axis=0)
    z = np.zeros((1, 7))
    dd = np.diff(np.concatenate([z, d, z]), axis=0)
    dt_v = float(np.max(np.abs(d) / chain.velocity_limits))
    dt_a = float(np.sqrt(np.max(np.abs(dd) / chain.acceleration_limits)))
    return max(dt_v, dt_a) * (1 + 1e-9)


def _equal_spacing(samples: np.ndarray, q0, q1, n_max: int, max_spacing: float):
    """Fewest equal-arclength steps along ``samples`` that respect ``max_spacing``, or None."""
    length = _linf_arclength(samples)[-1]
    n = max(1, int(np.ceil(length / max_spacing - 1e-9)))
    while n <= n_max:
        cand = _resample_equal(samples, n)
        cand[0], cand[-1] = q0, q1
        if np.max(np.abs(np.diff(cand, axis=0))) <= max_spacing + 1e-12:
            return cand
        n += 1
    return None


def _smooth_once(w, q0, q1, chain, checker, n_waypoints, max_spacing, resolution, dense):
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(w, axis=0), axis=1))])
    spline = CubicSpline(s, w, bc_type="natural" if len(w) > 2 else "not-a-knot", axis=0)
    samples = spline(np.linspace(0.0, s[-1], dense * (len(w) - 1) + 1))
    samples[0], samples[-1] = q0, q1
    candidates = [(samples, "spline"), (w, "linear")]
    for src, method in candidates:
        out = _equal_spacing(src, q0, q1, n_waypoints - 1, max_spacing)
        if out is None or not all(chain.within_limits(q) for q in out):
            continue
        if checker is None or not checker.path_in_collision(out, resolution):
            return out, method
    # vertex-preserving fallback: stays on the validated edges, sampled afresh so checked again
    out = _linear_resample(w, max_spacing)
    out[0], out[-1] = q0, q1
    if len(out) > n_waypoints or (checker is not None and checker.path_in_collision(out, resolution)):
        return None, None
    return out, "linear"


def smooth_spline(
    path: Path,
    chain: KinematicChain,
    checker: CollisionChecker | None = None,
    n_waypoints: int = MAX_WAYPOINTS,
    max_spacing: float = MAX_SPACING,
    resolution: float = EDGE_RESOLUTION,
    dense: int = 64,
    extra_shortcuts: int = 200,
) -> Trajectory:
    """Cubic-spline smoothing with re-timing, resampled to bounded waypoint count and spacing.

    Candidates in order: the spline at equal L-infinity arclength, the
    polyline at equal arclength, then linear steps through every path vertex.
    The first two are kept only if they pass ``checker``. When none fits in
    ``n_waypoints`` and a checker is given, the path is shortcut
    ``extra_shortcuts`` more times (fixed seed) and smoothing is retried.

    Raises:
        SmoothingFailure: when the path needs more than ``n_waypoints`` waypoints.
    """
    q0, q1 = path.waypoints[0], path.waypoints[-1]
    w = _dedupe(np.asarray(path.waypoints, dtype=float))
    if len(w) == 1:
        return Trajectory(q0[None].copy(), 0.0, "spline")
    out, method = _smooth_once(w, q0, q1, chain, checker, n_waypoints, max_spacing, resolution, dense)
    if out is None and checker is not None and extra_shortcuts > 0:
        w = _dedupe(shortcut(Path(w), checker, extra_shortcuts, make_rng(0), resolution).waypoints)
        out, method = _smooth_once(w, q0, q1, chain, checker, n_waypoints, max_spacing, resolution, dense)
    if out is None:
        need = int(np.ceil(_linf_arclength(w)[-1] / max_spacing - 1e-9)) + 1
        raise SmoothingFailure(f"path needs at least {need} waypoints, limit is {n_waypoints}")
    return Trajectory(out, retime(out, chain), method)


def relabel_hindsight(result: PlanResult, problem: PlanningProblem) -> tuple[PlanningProblem, Trajectory]:
    """Turn an approximate plan into a problem whose goal is the configuration actually reached."""
    if result.status != PlanStatus.APPROXIMATE:
        raise ValueError("hindsight relabeling applies only to approximate results")
    g = np.asarray(result.reached, dtype=float).copy()
    new = PlanningProblem(problem.scene_id, problem.q0, g, problem.attached, problem.q0_class, "relabeled")
    w = result.path.waypoints.copy()
    w[-1] = g
    return new, Trajectory(w, 0.0, "raw")


def reverse_trajectory(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.waypoints[::-1].copy(), traj.dt, traj.method)


def reverse_problem(problem: PlanningProblem) -> PlanningProblem:
    return PlanningProblem(problem.scene_id, problem.g, problem.q0, problem.attached, problem.g_class, problem.q0_class)
