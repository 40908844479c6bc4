"""Pipeline configuration: one JSON document with a section per module."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..scenegen.problems import ATTACHED_RATIO, TIGHT_RATIO

CONFIG_SCHEMA = "mpforge.config/1"


class ConfigError(ValueError):
    """Unknown section or key, or a value of the wrong kind."""


@dataclass(frozen=True)
class SceneConfig:
    max_assets: int = 5
    max_shift_iters: int = 50
    categories: tuple | None = None  # None draws from all six
    meshes: bool = True
    collision_margin: float = 0.01


@dataclass(frozen=True)
class ProblemConfig:
    tight_ratio: float = TIGHT_RATIO
    attached_ratio: float = ATTACHED_RATIO
    sample_budget: int = 200


@dataclass(frozen=True)
class PlannerConfig:
    budget: float | None = None  # seconds; None bounds by iterations only (reproducible)
    max_connect_iters: int = 3000
    max_refine_iters: int = 400
    refine_patience: int = 150
    step: float = 0.5
    resolution: float = 0.05
    shortcut_iters: int = 50


@dataclass(frozen=True)
class SmoothingConfig:
    n_waypoints: int = 50
    max_spacing: float = 0.1


@dataclass(frozen=True)
class CloudConfig:
    n_scene_points: int = 16384
    n_obstacle: int = 4096
    n_robot: int = 2048
    segment_eps: float = 0.01
    noise_std: float = 0.0
    partial: bool = False


@dataclass(frozen=True)
class PolicyConfig:
    n_samples: int = 100
    score_eps: float = 0.01
    noise_std: float = 0.02
    goal_tol: float = 0.01
    extra_steps: int = 10  # horizon beyond the expert length


@dataclass(frozen=True)
class EvalConfig:
    pos_tol: float = 0.01
    rot_tol_deg: float = 15.0
    resolution: float = 0.005
    flip180: bool = False


@dataclass(frozen=True)
class DataConfig:
    relabel_approximate: bool = True
    reverse: bool = True


@dataclass(frozen=True)
class Config:
    scene: SceneConfig = field(default_factory=SceneConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    cloud: CloudConfig = field(default_factory=CloudConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA, **_jsonable(asdict(self))}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Config":
        doc = dict(doc)
        schema = doc.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
        sections = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        out = {}
        for name, f in sections.items():
            section_cls = type(getattr(cls(), name))
            out[name] = _section(section_cls, doc.get(name, {}), name)
        return cls(**out)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form; identifies the config in dataset manifests."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **sections) -> "Config":
        """``cfg.with_overrides(planner={"budget": 2.0})`` replaces individual keys."""
        out = self
        for name, values in sections.items():
            if not hasattr(self, name):
                raise ConfigError(f"unknown config section {name!r}")
            current = getattr(out, name)
            merged = {**asdict(current), **values}
            out = replace(out, **{name: _section(type(current), merged, name)})
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _section(section_cls, values: dict, name: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in fields(section_cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    defaults = section_cls()
    kwargs = {}
    for key, v in values.items():
        default = getattr(defaults, key)
        if isinstance(v, list):
            v = tuple(v)
        if isinstance(default, bool) and not isinstance(v, bool):
            raise ConfigError(f"{name}.{key} must be true or false")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ConfigError(f"{name}.{key} must be a number")
            if isinstance(default, int) and v is not None and int(v) != v:
                raise ConfigError(f"{name}.{key} must be an integer")
            if v is not None:
                v = type(default)(v)
        kwargs[key] = v
    return section_cls(**kwargs)


def load_config(path=None) -> Config:
    """Read a config file; missing sections and keys take their defaults."""
    if path is None:
        return Config()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return Config.from_dict(doc)


def save_config(cfg: Config, path) -> Path:
    path = Path(path)
    path.write_text(cfg.to_json() + "\n")
    return path
