"""Evaluation suites: aggregate success, collision and timing tables, plus the TTO benchmark."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cloudsim import assemble_observation, scene_cloud
from ..collision import CollisionChecker
from ..metrics import EvalReport, evaluate
from ..planner import PlanStatus, SmoothingFailure, plan
from ..policy import NoisyExpertProposer, execute_open_loop, tto_select
from ..rng import make_rng
from ..robot import load_robot
from ..scenegen.compose import generate_scene, world_from_scene
from ..scenegen.problems import FREE, TIGHT, SamplingFailure, sample_problem
from .config import Config
from .dataset import Dataset, _smooth, plan_kwargs
from .io import load_scene

SUITE_SCHEMA = "mpforge.suite/1"


class EmptyReportError(ValueError):
    """An evaluation suite was asked to summarise nothing."""


def task_label(problem) -> str:
    return f"{problem.q0_class}-{problem.g_class}"


def _aggregate(reports: list[EvalReport]) -> dict:
    n = len(reports)
    return {
        "n": n,
        "success_rate": sum(r.success for r in reports) / n,
        "collision_rate": sum(r.ground_truth_collisions > 0 for r in reports) / n,
        "safety_violation_rate": sum(r.safety_violation for r in reports) / n,
        "mean_planning_time": float(np.mean([r.planning_time for r in reports])),
    }


@dataclass(frozen=True)
class SuiteReport:
    per_task: dict
    aggregate: dict
    rows: tuple = field(default=(), repr=False)  # (task, EvalReport)

    def to_dict(self) -> dict:
        return {
            "schema": SUITE_SCHEMA,
            "aggregate": self.aggregate,
            "per_task": self.per_task,
            "rows": [{"task": t, **r.to_dict()} for t, r in self.rows],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SuiteReport":
        if doc.get("schema") != SUITE_SCHEMA:
            raise ValueError(f"not a suite report: schema {doc.get('schema')!r}")
        rows = tuple((r["task"], EvalReport(**{k: v for k, v in r.items() if k != "task"})) for r in doc["rows"])
        return cls(doc["per_task"], doc["aggregate"], rows)

    def to_text(self) -> str:
        head = f"{'task':<20}{'n':>6}{'success':>10}{'collision':>11}{'safety':>9}{'time [s]':>10}"
        lines = [head, "-" * len(head)]
        for name, row in [*sorted(self.per_task.items()), ("all", self.aggregate)]:
            lines.append(
                f"{name:<20}{row['n']:>6}{row['success_rate']:>10.3f}{row['collision_rate']:>11.3f}"
                f"{row['safety_violation_rate']:>9.3f}{row['mean_planning_time']:>10.3f}"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["task", "n", "success_rate", "collision_rate", "safety_violation_rate", "mean_planning_time"])
        for name, row in [*sorted(self.per_task.items()), ("all", self.aggregate)]:
            w.writerow([name, row["n"], row["success_rate"], row["collision_rate"],
                        row["safety_violation_rate"], row["mean_planning_time"]])
        return buf.getvalue()


def summarize(rows) -> SuiteReport:
    """Per-task and overall means of ``(task, EvalReport)`` rows."""
    rows = tuple(rows)
    if not rows:
        raise EmptyReportError("nothing to evaluate")
    tasks: dict[str, list] = {}
    for t, r in rows:
        tasks.setdefault(t, []).append(r)
    return SuiteReport({t: _aggregate(rs) for t, rs in tasks.items()}, _aggregate([r for _, r in rows]), rows)


def run_eval_suite(items, cfg: Config | None = None, robot=None) -> SuiteReport:
    """Evaluate ``(problem, world, waypoints, planning_time)`` items against ground truth."""
    cfg = Config() if cfg is None else cfg
    robot = load_robot() if robot is None else robot
    e = cfg.eval
    rows = []
    for problem, world, waypoints, planning_time in items:
        rep = evaluate(
            waypoints, problem.g, world, robot, problem.attached, planning_time, e.flip180, e.resolution,
            e.pos_tol, e.rot_tol_deg,
        )
        rows.append((task_label(problem), rep))
    return summarize(rows)


def dataset_items(dataset: Dataset, cfg: Config | None = None):
    """Yield evaluation items for every record, loading each scene once."""
    cfg = Config() if cfg is None else cfg
    worlds = {}
    for r in dataset.records:
        if r.scene_ref not in worlds:
            worlds[r.scene_ref] = world_from_scene(load_scene(dataset.scene_path(r)), cfg.scene.collision_margin)
        t = r.planner_time if np.isfinite(r.planner_time) else 0.0
        yield r.problem, worlds[r.scene_ref], r.trajectory.waypoints, t


# ----------------------------------------------------------------------------
# test-time optimisation benchmark


@dataclass(frozen=True)
class TtoProblemResult:
    seed: int
    scores: np.ndarray
    selected_index: int
    selected_success: bool
    selected_collides: bool
    single_success_rate: float  # mean over all N rollouts: the expected one-shot success
    first_success: bool  # rollout 0 alone
    rollout_time: float
    rollout_success: tuple = ()  # per rollout, ground truth
    rollout_collision: tuple = ()  # per rollout, ground truth


@dataclass(frozen=True)
class TtoBenchmark:
    problems: tuple
    skipped: tuple  # (seed, reason)

    @property
    def tto_success_rate(self) -> float:
        return float(np.mean([p.selected_success for p in self.problems]))

    @property
    def single_success_rate(self) -> float:
        return float(np.mean([p.single_success_rate for p in self.problems]))

    def score_histogram(self, bins=(0, 1, 10, 100, 1000, 10000, np.inf)) -> dict:
        """Counts of all rollout scores in ``[bins[k], bins[k+1])``."""
        scores = np.concatenate([p.scores for p in self.problems])
        counts, _ = np.histogram(scores, bins=np.asarray(bins, dtype=float))
        labels = [f"[{bins[k]:g}, {bins[k + 1]:g})" for k in range(len(bins) - 1)]
        return dict(zip(labels, counts.tolist()))

    def to_dict(self) -> dict:
        return {
            "tto_success_rate": self.tto_success_rate,
            "single_success_rate": self.single_success_rate,
            "n_problems": len(self.problems),
            "skipped": [list(s) for s in self.skipped],
            "histogram": self.score_histogram(),
            "problems": [
                {
                    "seed": p.seed,
                    "scores": p.scores.tolist(),
                    "selected_index": p.selected_index,
                    "selected_success": p.selected_success,
                    "single_success_rate": p.single_success_rate,
                }
                for p in self.problems
            ],
        }


def shelf_problem(seed: int, cfg: Config, robot, categories=("shelf",), max_assets: int = 2):
    """A free start and a goal inside a shelf-like asset, with its expert trajectory.

    Returns ``(scene, world, problem, trajectory)`` or raises ``SamplingFailure``,
    ``SmoothingFailure`` or ``RuntimeError`` when the expert does not reach the goal.
    """
    scene = generate_scene(seed, max_assets, None, cfg.scene.max_shift_iters, categories)
    world = world_from_scene(scene, cfg.scene.collision_margin)
    problem = sample_problem(scene, make_rng(seed, 1), world, robot, None, cfg.problem.sample_budget, (FREE, TIGHT, False))
    result = plan(problem, world, robot, make_rng(seed, 2), **plan_kwargs(cfg))
    if result.status != PlanStatus.EXACT:
        raise RuntimeError(f"expert returned {result.status.value}")
    traj = _smooth(result.path, robot, CollisionChecker(robot, world, problem.attached), cfg)
    return scene, world, problem, traj


def tto_benchmark(
    n_problems: int,
    cfg: Config | None = None,
    first_seed: int = 0,
    noise_std: float | None = None,
    n_samples: int | None = None,
    categories=("shelf",),
    max_seeds: int | None = None,
) -> TtoBenchmark:
    """Noisy-expert proposer with and without TTO on ``n_problems`` shelf-like problems.

    Every rollout is executed against the exact scene; the one-shot rate is the
    mean over all rollouts, the TTO rate uses the selected rollout only.
    """
    cfg = Config() if cfg is None else cfg
    robot = load_robot()
    noise = cfg.policy.noise_std if noise_std is None else noise_std
    N = cfg.policy.n_samples if n_samples is None else n_samples
    max_seeds = 4 * n_problems if max_seeds is None else max_seeds
    done, skipped = [], []
    seed = first_seed
    while len(done) < n_problems and seed < first_seed + max_seeds:
        try:
            scene, world, problem, traj = shelf_problem(seed, cfg, robot, categories)
        except (SamplingFailure, SmoothingFailure, RuntimeError) as exc:
            skipped.append((seed, str(exc)))
            seed += 1
            continue
        c = cfg.cloud
        rng = make_rng(seed, 3)
        cloud = scene_cloud(world, c.n_scene_points, rng, c.noise_std, c.partial)
        obs = assemble_observation(cloud, robot, problem.q0, problem.g, problem.attached, rng, c.n_obstacle, c.n_robot, c.segment_eps)
        proposer = NoisyExpertProposer(traj, noise)
        H = len(traj) + cfg.policy.extra_steps
        t0 = time.perf_counter()
        res = tto_select(proposer, problem.q0, problem.g, obs, H, make_rng(seed, 4), N, cfg.policy.score_eps,
                         cfg.policy.goal_tol, keep_rollouts=True)
        elapsed = time.perf_counter() - t0
        recs = [execute_open_loop(r, problem.g, world, robot, problem.attached, cfg.eval.resolution)
                for r in res.rollouts]
        outcomes = [r.success for r in recs]
        done.append(
            TtoProblemResult(seed, res.scores, res.index, outcomes[res.index], recs[res.index].in_collision,
                             float(np.mean(outcomes)), outcomes[0], elapsed, tuple(outcomes),
                             tuple(r.in_collision for r in recs))
        )
        seed += 1
    return TtoBenchmark(tuple(done), tuple(skipped))


def save_suite(report: SuiteReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return path


def load_suite(path) -> SuiteReport:
    return SuiteReport.from_dict(json.loads(Path(path).read_text()))
