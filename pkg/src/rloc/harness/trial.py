"""Trial orchestration: worlds, localizers, scheduler and error accounting."""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..alg1 import UNDERDETERMINED, UNIQUE, Alg1Robot
from ..alg2 import MOBILE, STATIONARY, Alg2Robot
from ..engine import MotionCommand, World, substream
from ..geometry import pose_error
from ..scheduler import is_independent, new_states, schedule_round, straw_man_schedule
from .config import TrialConfig
from .controllers import circular_variance, flocking_controller, random_walk_controller

CH_CONTROL = 4


class InvariantViolation(RuntimeError):
    pass


def trial_seed(master: int, index: int) -> int:
    """Seed of trial ``index``; identical across sweep points and algorithms."""
    ss = np.random.SeedSequence(entropy=int(master) & ((1 << 64) - 1), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class TrialResult:
    seed: int
    sq_position: float = 0.0
    sq_orientation: float = 0.0
    samples: int = 0
    excluded: int = 0
    # (neighbor count in payload, scalar count) -> occurrences
    payload_sizes: Counter = field(default_factory=Counter)
    schedule_length: int = 0
    max_epochs: int = 0
    headings: list[float] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


@dataclass
class TrialStats:
    mse_position: float
    mse_orientation: float
    samples: int
    excluded: int
    trials: int
    payload_sizes: Counter
    schedule_length: int
    max_epochs: int
    results: list[TrialResult] = field(default_factory=list, repr=False)

    @property
    def ambiguity_rate(self) -> float:
        total = self.samples + self.excluded
        return self.excluded / total if total else 0.0


def _accumulate(res: TrialResult, est, truth, include: bool):
    if not include:
        res.excluded += 1
        return
    pe, oe = pose_error(est, truth)
    res.sq_position += pe * pe
    res.sq_orientation += oe * oe
    res.samples += 1


def _usable_orientation(result) -> float | None:
    """Relative heading from an alg1 result when the window pins it down.

    Every near-optimal root of the window must agree on the heading; a flip
    or rotation ambiguity then still yields the orientation.
    """
    if result.ambiguity == UNDERDETERMINED or not result.heading_pinned():
        return None
    return result.estimate.orientation


def _command(config: TrialConfig, seed: int, k: int, u: int, usable: dict) -> MotionCommand:
    rng = substream(seed, k, u, CH_CONTROL)
    if config.controller == "random_walk":
        return random_walk_controller(rng)
    if not usable:
        # no heading to follow yet: sidestep in a random direction without
        # turning, so the windows get excited and the heading is kept
        a = float(rng.uniform(-math.pi, math.pi))
        s = config.flock_speed
        return MotionCommand(s * math.cos(a), s * math.sin(a), 0.0)
    return flocking_controller(usable, speed=config.flock_speed)


def _run_alg1(config: TrialConfig, seed: int, trace: bool) -> TrialResult:
    world = World(replace(config.world, seed=seed))
    noise = config.world.noise
    robots = [Alg1Robot(u, config.delta, noise) for u in range(world.n)]
    res = TrialResult(seed)
    obs = world.observe()
    for k in range(config.effective_rounds):
        world.deliver(obs, lambda u, o: robots[u].payload(o))
        commands = {}
        for u in range(world.n):
            for w in obs[u].inbox:
                res.payload_sizes[(0, obs[u].inbox[w].scalar_count)] += 1
            results = robots[u].run_round(obs[u])
            usable = {}
            for w, r in results.items():
                o = _usable_orientation(r)
                if o is not None:
                    usable[w] = replace(r.estimate, orientation=o)
                if k >= config.warmup_discard:
                    include = (r.ambiguity == UNIQUE and r.confirmed) or config.include_ambiguous
                    _accumulate(res, r.estimate, world.ground_truth_relative(u, w), include)
            commands[u] = _command(config, seed, k, u, usable)
        if trace:
            res.trace.extend(world.trace_records(obs))
        obs = world.advance(commands)
    res.headings = [p.orientation for p in world.poses]
    return res


def _run_alg2(config: TrialConfig, seed: int, trace: bool) -> TrialResult:
    world = World(replace(config.world, seed=seed))
    noise = config.world.noise
    n = world.n
    robots = [Alg2Robot(u, noise) for u in range(n)]
    states = new_states(n, seed)
    res = TrialResult(seed)
    moved = {u: STATIONARY for u in range(n)}
    last_mobile = [-1] * n
    obs = world.observe()
    for k in range(config.effective_rounds):
        world.deliver(obs, lambda u, o: robots[u].payload(o, moved[u]))
        for u in range(n):
            for w, msg in obs[u].inbox.items():
                res.payload_sizes[(len(msg.bearings), msg.scalar_count)] += 1
            est = robots[u].run_round(obs[u], moved[u])
            if k >= config.warmup_discard:
                for w, e in est.items():
                    include = e.bootstrapped or (config.include_ambiguous
                                                 and not math.isnan(e.estimate.orientation))
                    _accumulate(res, e.estimate, world.ground_truth_relative(u, w), include)
        if config.schedule == "mis":
            decision = schedule_round(states, world.neighbors)
            mobility = decision.mobility
            for ep in decision.selected_epochs.values():
                res.max_epochs = max(res.max_epochs, ep)
        else:
            m = straw_man_schedule(k, n)
            mobility = {u: MOBILE if u == m else STATIONARY for u in range(n)}
        mobile = frozenset(u for u, s in mobility.items() if s == MOBILE)
        if not is_independent(mobile, world.neighbors):
            raise InvariantViolation(f"adjacent mobile robots in round {k}: {sorted(mobile)}")
        for u in mobile:
            res.schedule_length = max(res.schedule_length, k - last_mobile[u])
            last_mobile[u] = k
        if trace:
            extra = {u: {"mobility": mobility[u]} for u in range(n)}
            res.trace.extend(world.trace_records(obs, extra))
        commands = {u: _command(config, seed, k, u, {}) for u in mobile}
        obs = world.advance(commands)
        moved = mobility
    res.headings = [p.orientation for p in world.poses]
    return res


def run_single(config: TrialConfig, index: int, trace: bool = False) -> TrialResult:
    seed = trial_seed(config.seed, index)
    if config.algorithm == "alg1":
        return _run_alg1(config, seed, trace)
    if config.controller == "flocking":
        raise InvariantViolation("flocking composes with alg1 only")
    return _run_alg2(config, seed, trace)


def _run_index(args):
    config, index = args
    return run_single(config, index)


def run_trial(config: TrialConfig, trace: bool = False) -> TrialStats:
    """Run every trial of ``config`` and pool the squared errors."""
    jobs = [(config, i) for i in range(config.trials)]
    if config.workers > 1 and not trace:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            results = list(ex.map(_run_index, jobs))
    else:
        results = [run_single(config, i, trace) for _, i in jobs]
    return aggregate(results)


def aggregate(results: Iterable[TrialResult]) -> TrialStats:
    results = list(results)
    samples = sum(r.samples for r in results)
    sizes: Counter = Counter()
    for r in results:
        sizes.update(r.payload_sizes)
    return TrialStats(
        mse_position=sum(r.sq_position for r in results) / samples if samples else math.nan,
        mse_orientation=sum(r.sq_orientation for r in results) / samples if samples else math.nan,
        samples=samples,
        excluded=sum(r.excluded for r in results),
        trials=len(results),
        payload_sizes=sizes,
        schedule_length=max((r.schedule_length for r in results), default=0),
        max_epochs=max((r.max_epochs for r in results), default=0),
        results=results,
    )


@dataclass
class SweepPoint:
    axis: str
    value: float
    algorithm: str
    delta: int
    stats: TrialStats


def sweep(config: TrialConfig, axis: str, values: Iterable[float],
          cache: dict | None = None) -> list[SweepPoint]:
    """Run ``config`` at every noise value on ``axis``; other axes keep their config values.

    ``cache`` maps a fully specified config to stats so a shared point (such as
    the all-zero noise run) is computed once across axes.
    """
    out = []
    for v in values:
        cfg = config.with_noise(axis, float(v))
        if cache is not None and cfg in cache:
            stats = cache[cfg]
        else:
            stats = run_trial(cfg)
            if cache is not None:
                cache[cfg] = stats
        out.append(SweepPoint(axis, float(v), cfg.algorithm, cfg.delta if cfg.algorithm == "alg1" else 0, stats))
    return out


@dataclass
class Comparison:
    axis_value: float
    mse_a: tuple[float, float]
    mse_b: tuple[float, float]

    @staticmethod
    def _ratio(b: float, a: float) -> float | str:
        if a < 1e-10 and b < 1e-10:
            return "both-zero"
        return b / a if a > 0 else math.inf

    @property
    def ratio_position(self):
        return self._ratio(self.mse_b[0], self.mse_a[0])

    @property
    def ratio_orientation(self):
        return self._ratio(self.mse_b[1], self.mse_a[1])


def compare_algorithms(points_a: list[SweepPoint], points_b: list[SweepPoint]) -> list[Comparison]:
    """Side-by-side MSE per matching sweep value; ratios are b / a."""
    by_value = {p.value: p for p in points_b}
    out = []
    for p in points_a:
        q = by_value.get(p.value)
        if q is None:
            continue
        out.append(Comparison(p.value, (p.stats.mse_position, p.stats.mse_orientation),
                              (q.stats.mse_position, q.stats.mse_orientation)))
    return out


def normalized(points: list[SweepPoint]) -> list[tuple[float, float, float]]:
    """(value, position, orientation) MSE divided by the smallest-nonzero-sigma point.

    Makes the m^2 and rad^2 series comparable on a common unitless scale.
    """
    nonzero = [p for p in points if p.value > 0]
    if not nonzero:
        return [(p.value, math.nan, math.nan) for p in points]
    base = min(nonzero, key=lambda p: p.value).stats
    return [(p.value, p.stats.mse_position / base.mse_position,
             p.stats.mse_orientation / base.mse_orientation) for p in points]


def flock(config: TrialConfig) -> list[float]:
    """Final circular variance of true headings for each trial."""
    if config.controller != "flocking" or config.algorithm != "alg1":
        config = replace(config, controller="flocking", algorithm="alg1")
    stats = run_trial(config)
    return [circular_variance(r.headings) for r in stats.results]
