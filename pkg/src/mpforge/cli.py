"""Command-line entry point: ``mpforge <command> [options]``.

Every command prints a JSON summary on stdout. Failures print
``{"error": ..., "message": ...}`` on stderr and exit nonzero
(2 for bad input, 1 for anything else).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from .cloudsim import assemble_observation, export_observation, scene_cloud
from .collision import CollisionChecker
from .harness.config import ConfigError, load_config
from .harness.dataset import build_scene, generate_dataset, load_dataset, plan_kwargs, resolve_workers, _smooth
from .harness.evaluation import dataset_items, run_eval_suite, save_suite
from .harness.io import (
    FormatError,
    load_problem,
    load_scene,
    load_trajectory,
    report_to_dict,
    save_problem,
    save_scene,
    save_trajectory,
)
from .metrics import evaluate
from .planner import PlanningError, PlanStatus, SmoothingFailure, plan, relabel_hindsight
from .policy import NoisyExpertProposer, TraceProposer, execute_open_loop, tto_select
from .rng import make_rng
from .robot import load_robot
from .scenegen.compose import world_from_scene
from .scenegen.meshes import bundled_library
from .scenegen.problems import SamplingFailure, sample_problem


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors are reported as JSON like every other failure."""

    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def parse_seeds(text: str) -> list[int]:
    """``"0:10"`` (half-open range), ``"3,5,9"`` or a single integer."""
    try:
        if ":" in text:
            a, b = text.split(":")
            seeds = list(range(int(a), int(b)))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse seeds {text!r}") from exc
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _emit(doc) -> int:
    print(json.dumps(doc, indent=2))
    return 0


def _world(scene, cfg):
    return world_from_scene(scene, cfg.scene.collision_margin)


def _seed_list(args) -> list[int]:
    if args.seeds is not None:
        return parse_seeds(args.seeds)
    if args.count is not None and args.count >= 1:
        return list(range(args.seed, args.seed + args.count))
    raise UsageError("give --count N (with --seed S) or --seeds")


def cmd_gen_scenes(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    robot = load_robot() if args.problems else None
    library = bundled_library() if cfg.scene.meshes else None
    written, failures = [], []
    if args.max_assets is not None:
        cfg = cfg.with_overrides(scene={"max_assets": args.max_assets})
    for seed in _seed_list(args):
        scene = build_scene(seed, cfg, library)
        save_scene(scene, out / f"scene_{seed}.json")
        written.append(seed)
        if args.problems:
            try:
                pc = cfg.problem
                p = sample_problem(scene, make_rng(seed, 1), _world(scene, cfg), robot, library, pc.sample_budget,
                                   tight_ratio=pc.tight_ratio, attached_ratio=pc.attached_ratio)
                save_problem(p, out / f"problem_{seed}.json")
            except SamplingFailure as exc:
                failures.append({"seed": seed, "reason": str(exc)})
    return _emit({"out": str(out), "scenes": written, "problem_failures": failures})


def cmd_gen_data(args, cfg) -> int:
    manifest = generate_dataset(cfg, _seed_list(args), args.out, resolve_workers(args.workers))
    return _emit({"out": args.out, "n_records": manifest["n_records"], "counts": manifest["counts"],
                  "failures": len(manifest["failures"])})


def cmd_plan(args, cfg) -> int:
    if args.budget is not None:
        cfg = cfg.with_overrides(planner={"budget": args.budget})
    robot = load_robot()
    scene, problem = load_scene(args.scene), load_problem(args.problem)
    world = _world(scene, cfg)
    result = plan(problem, world, robot, make_rng(args.seed, 2), **plan_kwargs(cfg))
    doc = {"status": result.status.value, "planning_time": result.planning_time, "iterations": result.iterations}
    if result.status == PlanStatus.FAILURE:
        doc["trajectory"] = None
        _emit(doc)
        return 1
    target = problem
    path = result.path
    if result.status == PlanStatus.APPROXIMATE:
        target, path = relabel_hindsight(result, problem)
    traj = _smooth(path, robot, CollisionChecker(robot, world, problem.attached), cfg)
    e = cfg.eval
    rep = evaluate(traj.waypoints, problem.g, world, robot, problem.attached, result.planning_time, e.flip180,
                   e.resolution, e.pos_tol, e.rot_tol_deg)
    doc.update({"n_waypoints": len(traj), "method": traj.method, "cost": traj.cost, "report": report_to_dict(rep)})
    if args.out:
        save_trajectory(traj, args.out)
        doc["trajectory"] = args.out
    return _emit(doc)


def cmd_tto(args, cfg) -> int:
    if (args.proposer is None) == (args.expert is None):
        raise UsageError("give exactly one of --proposer (trace file) or --expert (trajectory file)")
    robot = load_robot()
    scene, problem = load_scene(args.scene), load_problem(args.problem)
    world = _world(scene, cfg)
    if args.proposer is not None:
        proposer = TraceProposer.load(args.proposer)
        horizon = args.horizon or max(1, len(proposer.actions))
    else:
        expert = load_trajectory(args.expert)
        noise = cfg.policy.noise_std if args.noise is None else args.noise
        proposer = NoisyExpertProposer(expert, noise)
        horizon = args.horizon or len(expert) + cfg.policy.extra_steps
    c = cfg.cloud
    rng = make_rng(args.seed, 3)
    cloud = scene_cloud(world, c.n_scene_points, rng, c.noise_std, c.partial)
    obs = assemble_observation(cloud, robot, problem.q0, problem.g, problem.attached, rng, c.n_obstacle, c.n_robot,
                               c.segment_eps)
    n = args.samples or cfg.policy.n_samples
    res = tto_select(proposer, problem.q0, problem.g, obs, horizon, make_rng(args.seed, 4), n, cfg.policy.score_eps,
                     cfg.policy.goal_tol, resolve_workers(args.workers))
    rec = execute_open_loop(res.best, problem.g, world, robot, problem.attached, cfg.eval.resolution)
    doc = {
        "selected_index": res.index,
        "selected_score": int(res.scores[res.index]),
        "scores": res.scores.tolist(),
        "steps": res.best.steps,
        "execution": rec.__dict__,
    }
    if args.out:
        save_trajectory(res.best.trajectory, args.out)
        doc["trajectory"] = args.out
    return _emit(doc)


def cmd_eval(args, cfg) -> int:
    report = run_eval_suite(dataset_items(load_dataset(args.dataset), cfg), cfg)
    if args.out:
        save_suite(report, args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(report.to_text(), file=sys.stderr)
    return _emit({"aggregate": report.aggregate, "per_task": report.per_task, "report": args.out})


def cmd_export_cloud(args, cfg) -> int:
    robot = load_robot()
    scene, problem = load_scene(args.scene), load_problem(args.problem)
    world = _world(scene, cfg)
    c = cfg.cloud
    rng = make_rng(args.seed, 3)
    cloud = scene_cloud(world, c.n_scene_points, rng, c.noise_std, c.partial)
    q = problem.q0 if args.at == "start" else problem.g
    obs = assemble_observation(cloud, robot, q, problem.g, problem.attached, rng, c.n_obstacle, c.n_robot, c.segment_eps)
    export_observation(obs, args.out)
    segs = {k: len(v) for k, v in obs.segments().items()}
    return _emit({"out": args.out, "segments": segs, "padded": obs.padded})


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mpforge", description="Scene generation, expert planning and TTO tooling.")
    ap.add_argument("--config", help="JSON config file (defaults for anything missing)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="write procedurally generated scenes")
    p.add_argument("--count", type=int, help="number of consecutive seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed (with --count)")
    p.add_argument("--seeds", help='explicit seeds instead of --count: "0:10", "1,4,7" or one integer')
    p.add_argument("--max-assets", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--problems", action="store_true", help="also sample a planning problem per scene")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("gen-data", help="generate an expert dataset")
    p.add_argument("--count", type=int, help="number of consecutive seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed (with --count)")
    p.add_argument("--seeds", help="explicit seeds instead of --count")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None, help="default: $MPFORGE_WORKERS or 1")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("plan", help="plan and smooth one problem")
    p.add_argument("--scene", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=None, help="seconds; default: config (iteration-bounded)")
    p.add_argument("--out", help="trajectory JSON to write")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("tto", help="test-time optimisation with a trace or noisy-expert proposer")
    p.add_argument("--scene", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--proposer", help="JSONL trace of GMM actions")
    p.add_argument("--expert", help="trajectory JSON for the noisy-expert proposer")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="selected trajectory JSON to write")
    p.set_defaults(func=cmd_tto)

    p = sub.add_parser("eval", help="evaluate a dataset against ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--csv", help="CSV table path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-cloud", help="write a labelled observation cloud as PLY")
    p.add_argument("--scene", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--at", choices=("start", "goal"), default="start")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_cloud)
    return ap


USAGE_ERRORS = (UsageError, ConfigError, FormatError, FileNotFoundError, json.JSONDecodeError, KeyError)
RUNTIME_ERRORS = (SamplingFailure, PlanningError, SmoothingFailure, ValueError, RuntimeError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except USAGE_ERRORS as exc:
        code = 2
        err = exc
    except RUNTIME_ERRORS as exc:
        code = 1
        err = exc
    print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
