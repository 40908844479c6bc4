"""JSON round-trips for scenes, problems, trajectories and evaluation reports.

Floats are written with Python's shortest round-trip repr, so every load
reproduces the saved arrays bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..geometry import Cuboid
from ..metrics import EvalReport
from ..planner import Trajectory
from ..rng import RNG_NAME
from ..robot import AttachedObject
from ..scenegen.assets import AssetCategory, AssetParams, build_asset
from ..scenegen.compose import MeshObject, Scene, Table
from ..scenegen.meshes import bundled_library
from ..scenegen.problems import PlanningProblem

SCENE_SCHEMA = "mpforge.scene/1"
PROBLEM_SCHEMA = "mpforge.problem/1"
TRAJECTORY_SCHEMA = "mpforge.trajectory/1"
REPORT_SCHEMA = "mpforge.report/1"
REBUILD_TOL = 1e-9


class FormatError(ValueError):
    """A file does not match the expected schema or is internally inconsistent."""


def _expect(doc: dict, schema: str):
    if doc.get("schema") != schema:
        raise FormatError(f"expected schema {schema!r}, found {doc.get('schema')!r}")


def _cuboid_dict(c: Cuboid) -> dict:
    return {"pose": c.pose.tolist(), "half_extents": c.half_extents.tolist()}


# ----------------------------------------------------------------------------
# scenes


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema": SCENE_SCHEMA,
        "seed": scene.seed,
        "rng": RNG_NAME,
        "table": {k: getattr(scene.table, k) for k in ("depth", "width", "thickness", "top_z")},
        "assets": [
            {
                "category": a.category.value,
                "params": dict(a.params.values),
                "offset": a.offset.tolist(),
                "cuboids": [_cuboid_dict(c) for c in a.cuboids],
                "articulations": [
                    {"name": j.name, "kind": j.kind, "value": j.value, "lower": j.lower, "upper": j.upper}
                    for j in a.articulations
                ],
            }
            for a in scene.assets
        ],
        "mesh_objects": [
            {
                "mesh": {"name": m.mesh.name, "sha256": m.mesh.content_hash},
                "pose": m.pose.tolist(),
                "scale": m.scale,
                "host": m.host,
                "region": m.region,
            }
            for m in scene.mesh_objects
        ],
        "shift_iterations": list(scene.shift_iterations),
        "discarded": scene.discarded,
    }


def scene_from_dict(doc: dict, library=None) -> Scene:
    """Rebuild a scene; assets are regenerated from their parameters and checked against the stored boxes."""
    _expect(doc, SCENE_SCHEMA)
    table = Table(**doc["table"])
    assets = []
    for k, a in enumerate(doc["assets"]):
        params = AssetParams(AssetCategory(a["category"]), dict(a["params"]))
        asset = replace(build_asset(params, table.top_z), offset=np.array(a["offset"], dtype=float))
        stored = a.get("cuboids")
        if stored is not None:
            rebuilt = asset.cuboids
            if len(rebuilt) != len(stored) or any(
                not np.allclose(c.pose, s["pose"], atol=REBUILD_TOL, rtol=0)
                or not np.allclose(c.half_extents, s["half_extents"], atol=REBUILD_TOL, rtol=0)
                for c, s in zip(rebuilt, stored)
            ):
                raise FormatError(f"asset {k} does not rebuild to its stored geometry")
        assets.append(asset)
    meshes = []
    if doc["mesh_objects"]:
        by_hash = {m.content_hash: m for m in (bundled_library() if library is None else library)}
        for m in doc["mesh_objects"]:
            mesh = by_hash.get(m["mesh"]["sha256"])
            if mesh is None:
                raise FormatError(f"mesh {m['mesh']['name']!r} ({m['mesh']['sha256'][:12]}) is not in the library")
            meshes.append(MeshObject(mesh, np.array(m["pose"], dtype=float), m["scale"], m["host"], m["region"]))
    return Scene(doc["seed"], table, tuple(assets), tuple(meshes), tuple(doc["shift_iterations"]), doc["discarded"])


def save_scene(scene: Scene, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(scene_to_dict(scene)) + "\n")
    return path


def load_scene(path, library=None) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()), library)


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Bit-exact comparison of everything a scene file records."""
    return json.dumps(scene_to_dict(a)) == json.dumps(scene_to_dict(b))


# ----------------------------------------------------------------------------
# problems and trajectories


def attached_to_dict(obj: AttachedObject | None):
    if obj is None:
        return None
    return {
        "kind": obj.kind,
        "dims": list(obj.dims),
        "grasp_offset": np.asarray(obj.grasp_offset).tolist(),
        "vertices": None if obj.vertices is None else np.asarray(obj.vertices).tolist(),
        "faces": None if obj.faces is None else np.asarray(obj.faces).tolist(),
    }


def attached_from_dict(doc) -> AttachedObject | None:
    if doc is None:
        return None
    return AttachedObject(
        doc["kind"],
        tuple(doc["dims"]),
        np.array(doc["grasp_offset"], dtype=float),
        None if doc["vertices"] is None else np.array(doc["vertices"], dtype=float),
        None if doc["faces"] is None else np.array(doc["faces"], dtype=int),
    )


def problem_to_dict(p: PlanningProblem) -> dict:
    return {
        "schema": PROBLEM_SCHEMA,
        "scene_id": p.scene_id,
        "q0": p.q0.tolist(),
        "g": p.g.tolist(),
        "q0_class": p.q0_class,
        "g_class": p.g_class,
        "attached": attached_to_dict(p.attached),
    }


def problem_from_dict(doc: dict) -> PlanningProblem:
    _expect(doc, PROBLEM_SCHEMA)
    return PlanningProblem(
        doc["scene_id"], doc["q0"], doc["g"], attached_from_dict(doc["attached"]), doc["q0_class"], doc["g_class"]
    )


def save_problem(p: PlanningProblem, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(problem_to_dict(p)) + "\n")
    return path


def load_problem(path) -> PlanningProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))


def trajectory_to_dict(t: Trajectory) -> dict:
    return {"schema": TRAJECTORY_SCHEMA, "waypoints": t.waypoints.tolist(), "dt": t.dt, "method": t.method}


def trajectory_from_dict(doc: dict) -> Trajectory:
    _expect(doc, TRAJECTORY_SCHEMA)
    return Trajectory(np.array(doc["waypoints"], dtype=float).reshape(-1, 7), doc["dt"], doc["method"])


def save_trajectory(t: Trajectory, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(trajectory_to_dict(t)) + "\n")
    return path


def load_trajectory(path) -> Trajectory:
    return trajectory_from_dict(json.loads(Path(path).read_text()))


# ----------------------------------------------------------------------------
# reports


def report_to_dict(r: EvalReport) -> dict:
    return {"schema": REPORT_SCHEMA, **r.to_dict()}


def report_from_dict(doc: dict) -> EvalReport:
    _expect(doc, REPORT_SCHEMA)
    return EvalReport(**{k: v for k, v in doc.items() if k != "schema"})


def save_json(doc, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path
