"""Deterministic synchronous round-based world.

The engine owns the ground truth.  Each round it moves robots by their
commands, rebuilds the unit-disk communication graph, and hands every robot a
:class:`RoundObservation` with noisy ranges to its neighbors, its own noisy
odometry and the payloads its neighbors broadcast this round.

All randomness is drawn from counter-addressed substreams
``(seed, round, robot, channel)`` so results never depend on iteration order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .geometry import OdometryDelta, Pose, RelativePose, relative_pose, rotate, wrap_angle

# substream channel ids
CH_DEPLOY = 0
CH_DISTANCE = 1
CH_ODOMETRY = 2

BOUNDARIES = ("reflect", "free")


class ConfigError(ValueError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by ``key`` under a master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the zero-mean Gaussian measurement noise."""

    sigma_d: float = 0.0
    sigma_phi: float = 0.0
    sigma_x: float = 0.0
    sigma_y: float = 0.0

    def __post_init__(self):
        for name in ("sigma_d", "sigma_phi", "sigma_x", "sigma_y"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a finite value >= 0, got {v!r}")

    @property
    def is_zero(self) -> bool:
        return self.sigma_d == self.sigma_phi == self.sigma_x == self.sigma_y == 0.0

    def scale(self, distance: float = 1.0) -> float:
        """Rough one-sigma position uncertainty of a single measurement at ``distance``."""
        return self.sigma_d + max(self.sigma_x, self.sigma_y) + self.sigma_phi * max(distance, 1.0)


@dataclass(frozen=True)
class WorldConfig:
    """World parameters.

    ``comm_radius`` defaults to 5 m, which keeps ten robots dropped uniformly
    in the 10 m x 10 m arena connected in most draws.  ``boundary`` decides
    what happens when a motion leaves the arena: ``reflect`` mirrors the
    robot back inside (heading mirrored too), ``free`` lets it leave.
    """

    robot_count: int = 10
    arena: tuple[float, float] = (10.0, 10.0)
    comm_radius: float = 5.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    boundary: str = "reflect"

    def __post_init__(self):
        if int(self.robot_count) < 1:
            raise ConfigError("robot_count must be >= 1")
        w, h = self.arena
        if not (w > 0 and h > 0):
            raise ConfigError("arena dimensions must be > 0")
        if not self.comm_radius > 0:
            raise ConfigError("comm_radius must be > 0")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")


@dataclass(frozen=True)
class MotionCommand:
    """Rigid motion in the robot's pre-step frame: translate, then turn."""

    tx: float = 0.0
    ty: float = 0.0
    rotation: float = 0.0

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])


ZERO_COMMAND = MotionCommand()


@dataclass
class RoundObservation:
    round: int
    robot: int
    neighbor_ids: frozenset
    distances: dict[int, float]
    own_odometry: OdometryDelta
    inbox: dict[int, Any] = field(default_factory=dict)


class World:
    def __init__(self, config: WorldConfig):
        self.config = config
        n = config.robot_count
        rng = substream(config.seed, 0, 0, CH_DEPLOY)
        w, h = config.arena
        xy = rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        self.poses: list[Pose] = [Pose(x, y, o) for (x, y), o in zip(xy, phi)]
        self.round = 0
        self.neighbors: list[frozenset] = self._graph()

    @property
    def n(self) -> int:
        return len(self.poses)

    def _graph(self) -> list[frozenset]:
        pos = np.array([p.position for p in self.poses])
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        adj = dist <= self.config.comm_radius
        np.fill_diagonal(adj, False)
        return [frozenset(np.flatnonzero(row).tolist()) for row in adj]

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u, nb in enumerate(self.neighbors) for v in nb if u < v}

    def true_distance(self, u: int, w: int) -> float:
        d = self.poses[u].position - self.poses[w].position
        return float(math.hypot(d[0], d[1]))

    def ground_truth_relative(self, u: int, w: int) -> RelativePose:
        """Exact pose of ``w`` in ``u``'s frame.  Oracle use only."""
        if not (0 <= u < self.n and 0 <= w < self.n):
            raise KeyError(f"unknown robot id {u if not 0 <= u < self.n else w}")
        return relative_pose(self.poses[u], self.poses[w])

    def _move(self, pose: Pose, cmd: MotionCommand) -> Pose:
        p = pose.position + rotate(pose.orientation, cmd.translation)
        phi = pose.orientation + cmd.rotation
        if self.config.boundary == "reflect":
            w, h = self.config.arena
            x, y = float(p[0]), float(p[1])
            # repeated folding handles steps longer than the arena
            for _ in range(8):
                if x < 0.0:
                    x, phi = -x, math.pi - phi
                elif x > w:
                    x, phi = 2.0 * w - x, math.pi - phi
                elif y < 0.0:
                    y, phi = -y, -phi
                elif y > h:
                    y, phi = 2.0 * h - y, -phi
                else:
                    break
            p = np.array([min(max(x, 0.0), w), min(max(y, 0.0), h)])
        return Pose.from_vector(p, phi)

    def advance(self, commands: Mapping[int, MotionCommand] | None = None) -> dict[int, RoundObservation]:
        """Move, rebuild the graph and sense.  Inboxes are left empty."""
        commands = commands or {}
        old = self.poses
        self.poses = [self._move(p, commands.get(u, ZERO_COMMAND)) for u, p in enumerate(old)]
        self.round += 1
        self.neighbors = self._graph()
        return self._sense(old)

    def observe(self) -> dict[int, RoundObservation]:
        """Sense at the current round without moving (used for the deployment round)."""
        return self._sense(None)

    def _sense(self, old: list[Pose] | None) -> dict[int, RoundObservation]:
        noise = self.config.noise
        seed = self.config.seed
        k = self.round
        obs = {}
        for u in range(self.n):
            if old is None:
                odo = OdometryDelta()
            else:
                true_delta = relative_pose(self.poses[u], old[u])
                t = true_delta.position
                rot = wrap_angle(true_delta.orientation)
                z_odo = substream(seed, k, u, CH_ODOMETRY).standard_normal(3)
                odo = OdometryDelta(
                    float(t[0] + noise.sigma_x * z_odo[0]),
                    float(t[1] + noise.sigma_y * z_odo[1]),
                    float(rot + noise.sigma_phi * z_odo[2]),
                )
            nb = self.neighbors[u]
            dists = {}
            if nb:
                z_d = substream(seed, k, u, CH_DISTANCE).standard_normal(self.n)
                for w in sorted(nb):
                    dists[w] = self.true_distance(u, w) + noise.sigma_d * float(z_d[w])
            obs[u] = RoundObservation(k, u, nb, dists, odo)
        return obs

    def deliver(self, observations: Mapping[int, RoundObservation], messages) -> None:
        """Fill inboxes with this round's broadcasts.

        ``messages`` maps robot id to payload, or is a callable
        ``(robot, observation) -> payload`` evaluated once per sender.  Payloads
        are opaque to the engine.
        """
        if callable(messages):
            messages = {u: messages(u, o) for u, o in observations.items()}
        for u, o in observations.items():
            o.inbox = {w: messages[w] for w in sorted(o.neighbor_ids) if w in messages}

    def step(self, commands: Mapping[int, MotionCommand] | None = None,
             messages: Mapping[int, Any] | Callable | None = None) -> dict[int, RoundObservation]:
        obs = self.advance(commands)
        if messages is not None:
            self.deliver(obs, messages)
        return obs

    def trace_records(self, observations: Mapping[int, RoundObservation], extra: Mapping[int, dict] | None = None):
        """One JSON-ready record per robot for the current round."""
        for u in range(self.n):
            p = self.poses[u]
            o = observations.get(u)
            nb = sorted(o.neighbor_ids) if o else sorted(self.neighbors[u])
            rec = {
                "round": self.round,
                "id": u,
                "x": p.x,
                "y": p.y,
                "phi": p.orientation,
                "neighbors": nb,
                "dist": [o.distances[w] for w in nb] if o else [],
            }
            if extra and u in extra:
                rec.update(extra[u])
            yield rec
