"""Trial configuration and its YAML schema.

A config file is a YAML mapping with the :class:`TrialConfig` fields at the
top level and a nested ``world`` mapping (``noise`` nested inside it)::

    algorithm: alg1
    delta: 2
    rounds: 20
    trials: 50
    warmup_discard: 3
    seed: 7
    world:
      robot_count: 10
      arena: [10, 10]
      comm_radius: 5.0
      noise: {sigma_d: 0.05, sigma_phi: 0.0, sigma_x: 0.0, sigma_y: 0.0}
    sweep:
      axis: sigma_d
      values: [0.0, 0.05, 0.1]
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from ..engine import ConfigError, NoiseSpec, WorldConfig

ALGORITHMS = ("alg1", "alg2")
CONTROLLERS = ("random_walk", "flocking")
SCHEDULES = ("mis", "straw_man")
AXES = ("sigma_d", "sigma_phi", "sigma_xy")


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals or any(not v >= 0.0 for v in vals):
            raise ConfigError("sweep values must be a non-empty list of numbers >= 0")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class TrialConfig:
    """One experiment.

    ``rounds`` is the trial length for alg1; with ``double_alg2`` set,
    alg2 runs twice as many rounds so each robot gets a comparable
    number of motions.
    """

    algorithm: str = "alg1"
    delta: int = 2
    rounds: int = 20
    trials: int = 50
    world: WorldConfig = field(default_factory=WorldConfig)
    controller: str = "random_walk"
    warmup_discard: int = 3
    seed: int = 0
    sweep: Sweep | None = None
    schedule: str = "mis"
    double_alg2: bool = True
    include_ambiguous: bool = False
    flock_speed: float = 0.3
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if int(self.delta) < 2:
            raise ConfigError("delta must be >= 2")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.warmup_discard) < 0:
            raise ConfigError("warmup_discard must be >= 0")
        if int(self.rounds) <= int(self.warmup_discard):
            raise ConfigError("rounds must exceed warmup_discard")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if not self.flock_speed >= 0.0:
            raise ConfigError("flock_speed must be >= 0")

    @property
    def effective_rounds(self) -> int:
        if self.algorithm == "alg2" and self.double_alg2:
            return 2 * self.rounds
        return self.rounds

    def with_noise(self, axis: str, value: float) -> "TrialConfig":
        """Copy with one noise axis set (``sigma_xy`` sets both odometry axes)."""
        noise = self.world.noise
        if axis == "sigma_xy":
            noise = replace(noise, sigma_x=value, sigma_y=value)
        elif axis in ("sigma_d", "sigma_phi"):
            noise = replace(noise, **{axis: value})
        else:
            raise ConfigError(f"unknown noise axis {axis!r}")
        return replace(self, world=replace(self.world, noise=noise))


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def config_from_dict(data: dict[str, Any]) -> TrialConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    world = dict(data.pop("world", {}) or {})
    if "noise" in world:
        world["noise"] = _build(NoiseSpec, world["noise"] or {}, "world.noise")
    if "arena" in world:
        try:
            w, h = world["arena"]
            world["arena"] = (float(w), float(h))
        except (TypeError, ValueError) as exc:
            raise ConfigError("world.arena must be [width, height]") from exc
    data["world"] = _build(WorldConfig, world, "world")
    if data.get("sweep") is not None:
        data["sweep"] = _build(Sweep, data["sweep"], "sweep")
    return _build(TrialConfig, data, "config")


def load_config(path: str | Path) -> TrialConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data or {})
