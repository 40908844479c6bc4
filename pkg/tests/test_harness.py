import contextlib
import io
import json

import numpy as np
import pytest

from mpforge.cli import main, parse_seeds, UsageError
from mpforge.harness import (
    Config,
    ConfigError,
    FormatError,
    dataset_digest,
    generate_dataset,
    load_config,
    load_dataset,
    load_problem,
    load_scene,
    load_trajectory,
    run_eval_suite,
    save_config,
    save_problem,
    save_scene,
    save_trajectory,
    summarize,
)
from mpforge.harness.dataset import WORKERS_ENV, resolve_workers
from mpforge.harness.evaluation import EmptyReportError, SuiteReport, dataset_items, load_suite, save_suite
from mpforge.harness.io import scene_from_dict, scene_to_dict, scenes_equal
from mpforge.metrics import EvalReport
from mpforge.planner import Trajectory
from mpforge.policy import GmmAction, TraceProposer
from mpforge.rng import make_rng
from mpforge.scenegen.compose import generate_scene
from mpforge.scenegen.problems import sample_problem, SamplingFailure
from mpforge.scenegen.compose import world_from_scene

SMALL = {"scene": {"max_assets": 2}, "planner": {"max_connect_iters": 1500, "max_refine_iters": 100}}


@pytest.fixture(scope="module")
def small_cfg():
    return Config.from_dict(SMALL)


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory, small_cfg):
    out = tmp_path_factory.mktemp("ds")
    manifest = generate_dataset(small_cfg, range(4), out, workers=1)
    return out, manifest


# ----------------------------------------------------------------------------
# config


def test_config_round_trip(tmp_path):
    cfg = Config().with_overrides(planner={"budget": 2.0}, policy={"n_samples": 10})
    assert cfg.planner.budget == 2.0 and cfg.policy.n_samples == 10
    back = load_config(save_config(cfg, tmp_path / "c.json"))
    assert back == cfg and back.hash() == cfg.hash()
    assert Config().hash() != cfg.hash()
    assert load_config() == Config()


@pytest.mark.parametrize(
    "doc",
    [
        {"schema": "other/9"},
        {"bogus": {}},
        {"planner": {"nope": 1}},
        {"planner": {"step": "fast"}},
        {"planner": {"max_connect_iters": 1.5}},
        {"data": {"reverse": 1}},
        {"planner": 3},
    ],
)
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        Config.from_dict(doc)


def test_config_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


# ----------------------------------------------------------------------------
# file formats


def test_scene_round_trip(tmp_path, library):
    for seed in range(4):
        scene = generate_scene(seed, 4, library)
        back = load_scene(save_scene(scene, tmp_path / f"s{seed}.json"), library)
        assert scenes_equal(scene, back)
        for a, b in zip(scene.cuboids(), back.cuboids()):
            assert a == b


def test_scene_tamper_detected(library):
    scene = generate_scene(1, 3, library)
    doc = scene_to_dict(scene)
    if not doc["assets"]:
        pytest.skip("no assets")
    doc["assets"][0]["params"] = dict(doc["assets"][0]["params"])
    key = next(k for k, v in doc["assets"][0]["params"].items() if isinstance(v, float))
    doc["assets"][0]["params"][key] += 0.01
    with pytest.raises(FormatError):
        scene_from_dict(doc, library)
    with pytest.raises(FormatError):
        scene_from_dict({**scene_to_dict(scene), "schema": "mpforge.scene/0"}, library)


def test_scene_unknown_mesh(library):
    for seed in range(10):
        scene = generate_scene(seed, 3, library)
        if scene.mesh_objects:
            with pytest.raises(FormatError):
                scene_from_dict(scene_to_dict(scene), library=[])
            return
    pytest.fail("no scene with meshes")


def test_problem_and_trajectory_round_trip(tmp_path, robot, library):
    for seed in range(20):
        scene = generate_scene(seed, 2, library)
        try:
            p = sample_problem(scene, make_rng(seed, 1), world_from_scene(scene), robot, library)
        except SamplingFailure:
            continue
        if p.attached is None:
            continue
        q = load_problem(save_problem(p, tmp_path / "p.json"))
        assert np.array_equal(p.q0, q.q0) and np.array_equal(p.g, q.g)
        assert q.attached.kind == p.attached.kind
        assert np.array_equal(q.attached.grasp_offset, p.attached.grasp_offset)
        assert (q.q0_class, q.g_class) == (p.q0_class, p.g_class)
        break
    t = Trajectory(np.random.default_rng(0).normal(size=(5, 7)), 0.25, "linear")
    assert load_trajectory(save_trajectory(t, tmp_path / "t.json")) == t


# ----------------------------------------------------------------------------
# datasets


def test_dataset_manifest(dataset_dir):
    out, manifest = dataset_dir
    ds = load_dataset(out)
    assert manifest["seeds"] == [0, 1, 2, 3]
    assert len(ds) == manifest["n_records"] == sum(manifest["counts"].values())
    assert manifest["seeds_with_records"] + len(manifest["failures"]) == 4
    for r in ds.records:
        assert r.endpoints_match()
        assert r.provenance in ("expert", "reversed", "relabeled")
        assert (ds.scene_path(r)).exists()
        assert len(r.trajectory) <= 50
        assert np.max(np.abs(r.trajectory.deltas)) <= 0.1 + 1e-9
    for r in ds.by_provenance("reversed"):
        sib = ds.records[r.sibling]
        assert sib.provenance == "expert"
        assert np.array_equal(r.trajectory.waypoints, sib.trajectory.waypoints[::-1])
    assert manifest["config_hash"] == Config.from_dict(SMALL).hash()


def test_dataset_rerun_identical(dataset_dir, small_cfg, tmp_path):
    out, _ = dataset_dir
    generate_dataset(small_cfg, [3, 1, 0, 2], tmp_path, workers=1)
    assert dataset_digest(tmp_path) == dataset_digest(out)


def test_workers_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert resolve_workers() == 3 and resolve_workers(2) == 2
    monkeypatch.delenv(WORKERS_ENV)
    assert resolve_workers() == 1
    with pytest.raises(ValueError):
        resolve_workers(0)


def test_duplicate_seeds_rejected(small_cfg, tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(small_cfg, [1, 1], tmp_path)


def test_eval_suite(dataset_dir, small_cfg, robot, tmp_path):
    out, _ = dataset_dir
    ds = load_dataset(out)
    report = run_eval_suite(dataset_items(ds, small_cfg), small_cfg, robot)
    assert report.aggregate["n"] == len(ds)
    assert sum(v["n"] for v in report.per_task.values()) == len(ds)
    back = load_suite(save_suite(report, tmp_path / "r.json"))
    assert back.aggregate == report.aggregate and back.per_task == report.per_task
    assert "all" in report.to_text() and report.to_csv().count("\n") == len(report.per_task) + 2


def test_summarize():
    ok = EvalReport(True, 0.001, 1.0, 0, 0.5, False)
    bad = EvalReport(False, 0.02, 1.0, 3, 1.5, True)
    rep = summarize([("free-free", ok), ("free-free", bad), ("tight-free", ok)])
    assert rep.per_task["free-free"]["success_rate"] == 0.5
    assert rep.aggregate["collision_rate"] == pytest.approx(1 / 3)
    assert rep.aggregate["mean_planning_time"] == pytest.approx(2.5 / 3)
    assert SuiteReport.from_dict(rep.to_dict()).aggregate == rep.aggregate
    with pytest.raises(EmptyReportError):
        summarize([])


# ----------------------------------------------------------------------------
# command line


def test_parse_seeds():
    assert parse_seeds("2:5") == [2, 3, 4]
    assert parse_seeds("1,4") == [1, 4] and parse_seeds("7") == [7]
    with pytest.raises(UsageError):
        parse_seeds("a:b")
    with pytest.raises(UsageError):
        parse_seeds("5:5")


def _run(capsys, argv):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.fixture(scope="module")
def cli_problem(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["gen-scenes", "--count", "6", "--seed", "0", "--max-assets", "2", "--problems", "--out", str(out)])
    assert code == 0
    doc = json.loads(buf.getvalue())
    failed = {f["seed"] for f in doc["problem_failures"]}
    seed = next(s for s in doc["scenes"] if s not in failed)
    return out / f"scene_{seed}.json", out / f"problem_{seed}.json"


def test_cli_pipeline(tmp_path, capsys, cli_problem):
    scene, problem = cli_problem
    traj = tmp_path / "traj.json"
    code, out, _ = _run(capsys, ["plan", "--scene", str(scene), "--problem", str(problem), "--out", str(traj)])
    if code == 0:
        doc = json.loads(out)
        assert doc["status"] in ("exact", "approximate") and doc["n_waypoints"] <= 50
        code, out, _ = _run(capsys, ["tto", "--scene", str(scene), "--problem", str(problem), "--expert", str(traj),
                                     "--samples", "3"])
        assert code == 0 and len(json.loads(out)["scores"]) == 3
    else:
        assert code == 1
    ply = tmp_path / "c.ply"
    code, out, _ = _run(capsys, ["export-cloud", "--scene", str(scene), "--problem", str(problem), "--out", str(ply)])
    assert code == 0 and ply.exists()
    assert json.loads(out)["segments"] == {"robot": 2048, "goal": 2048, "obstacle": 4096}


def test_cli_trace_proposer(tmp_path, capsys, cli_problem):
    scene, problem = cli_problem
    trace = tmp_path / "trace.jsonl"
    TraceProposer(tuple(GmmAction.single(np.zeros(7), 0.01) for _ in range(4))).save(trace)
    code, out, _ = _run(capsys, ["tto", "--scene", str(scene), "--problem", str(problem), "--proposer", str(trace),
                                 "--samples", "5", "--out", str(tmp_path / "sel.json")])
    assert code == 0
    doc = json.loads(out)
    assert doc["steps"] == 4 and doc["selected_score"] == min(doc["scores"])
    assert len(load_trajectory(tmp_path / "sel.json")) == 5


def test_cli_eval(dataset_dir, tmp_path, capsys):
    out, _ = dataset_dir
    code, stdout, stderr = _run(capsys, ["eval", "--dataset", str(out), "--out", str(tmp_path / "r.json"),
                                         "--csv", str(tmp_path / "r.csv")])
    assert code == 0 and "success" in stderr
    assert json.loads(stdout)["aggregate"]["n"] == load_dataset(out).manifest["n_records"]
    assert (tmp_path / "r.csv").exists()


def test_cli_gen_data(tmp_path, capsys):
    code, out, _ = _run(capsys, ["gen-data", "--seeds", "5", "--out", str(tmp_path / "d")])
    assert code == 0 and (tmp_path / "d" / "manifest.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["plan", "--scene", "/nonexistent.json", "--problem", "/nonexistent.json"],
        ["gen-scenes", "--out", "/tmp/x"],
        ["eval", "--dataset", "/nonexistent"],
        ["nosuchcommand"],
    ],
)
def test_cli_usage_errors(argv, capsys):
    code, _, err = _run(capsys, argv)
    assert code == 2
    doc = json.loads(err.strip().splitlines()[-1])
    assert set(doc) == {"error", "message"}


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"planner": {"typo": 1}}))
    code, _, err = _run(capsys, ["--config", str(cfg), "gen-scenes", "--count", "1", "--out", str(tmp_path)])
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_cli_tto_needs_one_proposer(capsys, cli_problem):
    scene, problem = cli_problem
    code, _, err = _run(capsys, ["tto", "--scene", str(scene), "--problem", str(problem)])
    assert code == 2 and json.loads(err)["error"] == "UsageError"
