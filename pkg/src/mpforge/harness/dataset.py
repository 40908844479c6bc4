"""Seeded dataset generation: scene, problem, expert plan, smoothing and augmentation per seed.

Layout of a dataset directory::

    manifest.json       schema, config and its hash, RNG name, seeds, counts, failures
    records.jsonl       one JSON object per record, in seed order
    trajectories.bin    every record's waypoints as little-endian float64, concatenated
    timings.jsonl       wall-clock planner times (kept apart: they vary run to run)
    scenes/<seed>.json  the scene each record refers to

Planner budgets default to iteration counts, so every file except
``timings.jsonl`` is a pure function of the config and the seeds.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..collision import CollisionChecker
from ..planner import (
    PlanningError,
    PlanStatus,
    SmoothingFailure,
    Trajectory,
    plan,
    relabel_hindsight,
    reverse_problem,
    reverse_trajectory,
    smooth_spline,
)
from ..rng import RNG_NAME, make_rng
from ..robot import RobotDescription, load_robot
from ..scenegen.compose import Scene, generate_scene, world_from_scene
from ..scenegen.meshes import bundled_library
from ..scenegen.problems import PlanningProblem, SamplingFailure, sample_problem
from .config import Config
from .io import FormatError, problem_from_dict, problem_to_dict, scene_to_dict

DATASET_SCHEMA = "mpforge.dataset/1"
PROVENANCES = ("expert", "reversed", "relabeled")
FLOAT_FORMAT = "<f8"
WORKERS_ENV = "MPFORGE_WORKERS"
ENDPOINT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    index: int
    seed: int
    scene_ref: str  # path relative to the dataset directory
    problem: PlanningProblem
    trajectory: Trajectory
    provenance: str
    planner_time: float
    cost: float
    sibling: int | None = None  # expert record a reversed record came from

    def endpoints_match(self, tol: float = ENDPOINT_TOL) -> bool:
        w = self.trajectory.waypoints
        return bool(np.max(np.abs(w[0] - self.problem.q0)) <= tol and np.max(np.abs(w[-1] - self.problem.g)) <= tol)


@dataclass(frozen=True)
class SeedOutcome:
    """What one seed produced: a scene document, record stubs and an optional failure."""

    seed: int
    scene: dict | None
    records: tuple  # of (provenance, problem, trajectory, cost, sibling offset or None)
    planner_time: float
    failure: dict | None = None


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument, else ``MPFORGE_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("worker count must be at least 1")
    return workers


def build_scene(seed: int, cfg: Config, library=None) -> Scene:
    s = cfg.scene
    lib = (bundled_library() if library is None else library) if s.meshes else None
    return generate_scene(seed, s.max_assets, lib, s.max_shift_iters, s.categories)


def plan_kwargs(cfg: Config) -> dict:
    p = cfg.planner
    return {
        "budget": p.budget,
        "max_connect_iters": p.max_connect_iters,
        "max_refine_iters": p.max_refine_iters,
        "refine_patience": p.refine_patience,
        "step": p.step,
        "resolution": p.resolution,
        "shortcut_iters": p.shortcut_iters,
    }


def _smooth(path, robot, checker, cfg: Config) -> Trajectory:
    return smooth_spline(
        path, robot.chain, checker, cfg.smoothing.n_waypoints, cfg.smoothing.max_spacing, cfg.planner.resolution
    )


def process_seed(seed: int, cfg: Config, robot: RobotDescription | None = None, library=None) -> SeedOutcome:
    """Run the full per-seed pipeline; every failure becomes a manifest entry instead of an exception."""
    robot = load_robot() if robot is None else robot
    library = (bundled_library() if library is None else library) if cfg.scene.meshes else None
    scene = build_scene(seed, cfg, library)
    scene_doc = scene_to_dict(scene)
    world = world_from_scene(scene, cfg.scene.collision_margin)
    pc = cfg.problem
    try:
        problem = sample_problem(
            scene, make_rng(seed, 1), world, robot, library, pc.sample_budget, tight_ratio=pc.tight_ratio, attached_ratio=pc.attached_ratio,
        )
    except SamplingFailure as exc:
        return SeedOutcome(seed, scene_doc, (), 0.0, {"seed": seed, "stage": "sample", "reason": str(exc)})
    try:
        result = plan(problem, world, robot, make_rng(seed, 2), **plan_kwargs(cfg))
    except PlanningError as exc:
        return SeedOutcome(seed, scene_doc, (), 0.0, {"seed": seed, "stage": "plan", "reason": str(exc)})
    t = result.planning_time
    if result.status == PlanStatus.FAILURE:
        return SeedOutcome(seed, scene_doc, (), t, {"seed": seed, "stage": "plan", "reason": "no progress from start"})
    checker = CollisionChecker(robot, world, problem.attached)
    if result.status == PlanStatus.APPROXIMATE:
        if not cfg.data.relabel_approximate:
            return SeedOutcome(seed, scene_doc, (), t, {"seed": seed, "stage": "plan", "reason": "approximate"})
        problem, raw = relabel_hindsight(result, problem)
        provenance = "relabeled"
        path = raw
    else:
        provenance = "expert"
        path = result.path
    try:
        traj = _smooth(path, robot, checker, cfg)
    except SmoothingFailure as exc:
        return SeedOutcome(seed, scene_doc, (), t, {"seed": seed, "stage": "smooth", "reason": str(exc)})
    records = [(provenance, problem, traj, traj.cost, None)]
    if provenance == "expert" and cfg.data.reverse:
        records.append(("reversed", reverse_problem(problem), reverse_trajectory(traj), traj.cost, 0))
    return SeedOutcome(seed, scene_doc, tuple(records), t)


def _run_seed(seed, cfg):
    return process_seed(seed, cfg, load_robot(), bundled_library())


def generate_dataset(cfg: Config, seeds, out_dir, workers: int | None = None) -> dict:
    """Process ``seeds`` (in parallel when ``workers > 1``) and write the dataset directory.

    Outcomes are merged in seed order, so the worker count changes only wall time.
    Returns the manifest.
    """
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    workers = resolve_workers(workers)
    if workers == 1:
        robot, library = load_robot(), bundled_library()
        outcomes = [process_seed(s, cfg, robot, library) for s in seeds]
    else:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=workers)(delayed(_run_seed)(s, cfg) for s in seeds)
    return write_dataset(outcomes, cfg, out_dir)


def write_dataset(outcomes, cfg: Config, out_dir) -> dict:
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    outcomes = sorted(outcomes, key=lambda o: o.seed)
    lines, timings, failures, chunks = [], [], [], []
    counts = {p: 0 for p in PROVENANCES}
    offset = 0
    for o in outcomes:
        scene_ref = f"scenes/{o.seed}.json"
        if o.scene is not None:
            (out / scene_ref).write_text(json.dumps(o.scene) + "\n")
        if o.failure is not None:
            failures.append(o.failure)
        first = len(lines)
        for provenance, problem, traj, cost, sibling in o.records:
            w = np.ascontiguousarray(traj.waypoints, dtype=FLOAT_FORMAT)
            rec = {
                "index": len(lines),
                "seed": o.seed,
                "scene": scene_ref,
                "provenance": provenance,
                "problem": problem_to_dict(problem),
                "offset": offset,
                "n_waypoints": len(w),
                "dt": traj.dt,
                "method": traj.method,
                "cost": cost,
                "sibling": None if sibling is None else first + sibling,
            }
            lines.append(json.dumps(rec))
            timings.append(json.dumps({"index": rec["index"], "seed": o.seed, "planner_time": o.planner_time}))
            chunks.append(w.tobytes())
            offset += w.size
            counts[provenance] += 1
    (out / "records.jsonl").write_text("".join(line + "\n" for line in lines))
    (out / "trajectories.bin").write_bytes(b"".join(chunks))
    (out / "timings.jsonl").write_text("".join(line + "\n" for line in timings))
    manifest = {
        "schema": DATASET_SCHEMA,
        "rng": RNG_NAME,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seeds": [o.seed for o in outcomes],
        "n_records": len(lines),
        "counts": counts,
        "seeds_with_records": sum(1 for o in outcomes if o.records),
        "failures": failures,
        "float_format": FLOAT_FORMAT,
        "files": {"records": "records.jsonl", "trajectories": "trajectories.bin", "timings": "timings.jsonl"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


@dataclass(frozen=True, eq=False)
class Dataset:
    root: Path
    manifest: dict
    records: tuple

    def __len__(self) -> int:
        return len(self.records)

    def by_provenance(self, provenance: str) -> list[DatasetRecord]:
        return [r for r in self.records if r.provenance == provenance]

    def scene_path(self, record: DatasetRecord) -> Path:
        return self.root / record.scene_ref


def load_dataset(path) -> Dataset:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("schema") != DATASET_SCHEMA:
        raise FormatError(f"not a dataset manifest: schema {manifest.get('schema')!r}")
    files = manifest["files"]
    flat = np.frombuffer((root / files["trajectories"]).read_bytes(), dtype=manifest["float_format"])
    times = {}
    tpath = root / files["timings"]
    if tpath.exists():
        for line in tpath.read_text().splitlines():
            if line.strip():
                t = json.loads(line)
                times[t["index"]] = t["planner_time"]
    records = []
    for line in (root / files["records"]).read_text().splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        n = r["n_waypoints"]
        w = flat[r["offset"] : r["offset"] + 7 * n].astype(float).reshape(n, 7)
        records.append(
            DatasetRecord(
                r["index"], r["seed"], r["scene"], problem_from_dict(r["problem"]),
                Trajectory(w, r["dt"], r["method"]), r["provenance"], times.get(r["index"], float("nan")),
                r["cost"], r["sibling"],
            )
        )
    return Dataset(root, manifest, tuple(records))


def dataset_digest(path) -> str:
    """SHA-256 over every deterministic dataset file (timings excluded)."""
    import hashlib

    root = Path(path)
    h = hashlib.sha256()
    names = ["manifest.json", "records.jsonl", "trajectories.bin"] + sorted(
        f"scenes/{p.name}" for p in (root / "scenes").glob("*.json")
    )
    for name in names:
        h.update(name.encode())
        h.update((root / name).read_bytes())
    return h.hexdigest()
