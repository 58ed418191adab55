"""Run configuration: nested key/value documents, presets and dotted overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .planner import PlannerConfig
from .scenarios.occlusion import OcclusionModel, OcclusionScene
from .scenarios.timeshare import TimeshareModel, TimeshareScene

SCENES = {"occlusion": OcclusionScene, "timeshare": TimeshareScene}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    scene: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    n_particles: int = 1000
    seed: int = 0
    runs: int = 1
    sweep: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.scenario not in SCENES:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {sorted(SCENES)}")
        scene_keys = {f.name for f in fields(SCENES[self.scenario])}
        planner_keys = {f.name for f in fields(PlannerConfig)}
        for k in self.scene:
            if k not in scene_keys:
                raise ConfigError(f"scene has no parameter {k!r} for scenario {self.scenario!r}")
        for k in self.planner:
            if k not in planner_keys:
                raise ConfigError(f"planner has no parameter {k!r}")
        for axis in self.sweep:
            section, _, key = axis.partition(".")
            known = {"scene": scene_keys, "planner": planner_keys}.get(section)
            if known is None or key not in known:
                raise ConfigError(f"sweep axis {axis!r} does not name a scene or planner parameter")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")

    def scene_obj(self):
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in self.scene.items()}
        return SCENES[self.scenario](**kw)

    def planner_obj(self) -> PlannerConfig:
        return PlannerConfig(**self.planner)

    def model(self):
        scene = self.scene_obj()
        if self.scenario == "occlusion":
            return OcclusionModel(scene)
        return TimeshareModel(scene)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario,
            "seed": self.seed,
            "runs": self.runs,
            "n_particles": self.n_particles,
            "scene": dict(self.scene),
            "planner": dict(self.planner),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        if "scenario" not in doc:
            raise ConfigError("config needs a 'scenario'")
        if "seed" not in doc:
            raise ConfigError("config needs a 'seed'")
        return cls(**doc)

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        doc = apply_overrides(self.to_dict(), overrides)
        return RunConfig.from_dict(doc)


def apply_overrides(doc: dict, overrides: dict[str, Any]) -> dict:
    """Set ``a.b.c = value`` entries in a nested dict copy."""
    doc = copy.deepcopy(doc)
    for path, value in overrides.items():
        keys = path.split(".")
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {path!r}: {k!r} is not a section")
        node[keys[-1]] = value
    return doc


def parse_assignment(text: str) -> tuple[str, Any]:
    """Parse ``key.path=value`` with the value read as YAML."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    return key.strip(), yaml.safe_load(raw)


_OCC = {"scenario": "occlusion", "seed": 1, "runs": 10}
_VTS = {"scenario": "timeshare", "seed": 2, "runs": 10}

PRESETS: dict[str, dict] = {
    "1a": {**_OCC, "scene": {"prior_present": 0.2, "lateral_mobility": False}},
    "1b": {**_OCC, "scene": {"prior_present": 0.0, "lateral_mobility": False}},
    "1c": {**_OCC, "scene": {"prior_present": 0.2, "lateral_mobility": True}},
    "1d": {**_OCC, "scene": {"prior_present": 0.0, "lateral_mobility": True}},
    "2a-baseline": {**_VTS, "scene": {"gaze_log_preference": 0.0}},
    "2a-vts": {**_VTS, "scene": {"gaze_log_preference": -7.0}},
    "2b-narrow": {**_VTS, "scene": {"gaze_log_preference": -7.0, "lane_width": 2.5}},
    "2b-sweep": {
        **_VTS,
        "scene": {"gaze_log_preference": -7.0},
        "sweep": {
            "scene.gaze_log_preference": [-5.0, -7.0, -10.0],
            "scene.speed_sigma": [0.5, 2.0],
        },
    },
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return RunConfig.from_dict({"name": name, **copy.deepcopy(PRESETS[name])})


def load(source: str | Path) -> RunConfig:
    """Load a preset by name or a YAML config file by path."""
    if str(source) in PRESETS:
        return preset(str(source))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"{source!r} is neither a preset nor an existing file")
    doc = yaml.safe_load(path.read_text()) or {}
    base = doc.pop("preset", None)
    if base is not None:
        merged = preset(base).to_dict()
        merged.pop("name")  # a derived config is named after its file
        for section in ("scene", "planner", "sweep"):
            merged[section].update(doc.pop(section, {}) or {})
        merged.update(doc)
        doc = merged
    doc.setdefault("name", path.stem)
    return RunConfig.from_dict(doc)
