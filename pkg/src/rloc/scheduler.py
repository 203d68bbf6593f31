"""Stop/move scheduling via repeated randomized maximal independent sets.

Robots in ``compete`` run one Luby elimination step per round: an undecided
competitor whose ``(draw, id)`` beats every undecided competing neighbor is
selected, moves for that round and becomes ``inactive``.  Competitors next to
a selected robot are decided for the current epoch and wait stationary until
their neighborhood has no undecided competitor left, then start a fresh epoch.
An inactive robot returns to ``compete`` once all its neighbors are inactive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .alg2 import MOBILE, STATIONARY
from .engine import substream

COMPETE = "compete"
INACTIVE = "inactive"
CH_SCHEDULE = 3


@dataclass
class SchedulerState:
    robot_id: int
    phase: str = COMPETE
    decided: bool = False
    rng: np.random.Generator | None = None
    # epochs entered since the robot last moved
    epochs: int = 1

    def draw(self) -> float:
        if self.rng is None:
            self.rng = substream(0, self.robot_id, CH_SCHEDULE)
        return float(self.rng.random())


def luby_round(state: SchedulerState, competing_neighbor_draws: Mapping[int, float],
               draw: float | None = None) -> bool:
    """One elimination step: selected iff this robot's draw is a strict local maximum.

    Ties between equal draws go to the larger robot id.
    """
    if draw is None:
        draw = state.draw()
    mine = (draw, state.robot_id)
    return all(mine > (v, w) for w, v in competing_neighbor_draws.items())


@dataclass
class ScheduleDecision:
    mobility: dict[int, str]
    # robots selected this round together with the epochs they waited
    selected_epochs: dict[int, int] = field(default_factory=dict)

    @property
    def mobile(self) -> frozenset:
        return frozenset(u for u, m in self.mobility.items() if m == MOBILE)


def new_states(n: int, seed: int = 0) -> list[SchedulerState]:
    return [SchedulerState(u, rng=substream(seed, u, CH_SCHEDULE)) for u in range(n)]


def schedule_round(states: Sequence[SchedulerState], neighbors: Sequence[frozenset]) -> ScheduleDecision:
    """Classify every robot for this round and update the states in place."""
    n = len(states)
    # re-entry reads the phases neighbors reported last round
    inactive = [s.phase == INACTIVE for s in states]
    for u in range(n):
        s = states[u]
        if inactive[u] and all(inactive[w] for w in neighbors[u]):
            s.phase, s.decided, s.epochs = COMPETE, False, 1
    active = [s.phase == COMPETE and not s.decided for s in states]
    for u in range(n):
        s = states[u]
        if s.phase == COMPETE and s.decided and not any(active[w] for w in neighbors[u]):
            s.decided = False
            s.epochs += 1
    active = [s.phase == COMPETE and not s.decided for s in states]
    draws = {u: states[u].draw() for u in range(n) if active[u]}
    selected = set()
    for u in draws:
        nb = {w: draws[w] for w in neighbors[u] if w in draws}
        if luby_round(states[u], nb, draws[u]):
            selected.add(u)
    epochs = {}
    for u in selected:
        epochs[u] = states[u].epochs
        states[u].phase = INACTIVE
        states[u].decided = False
    for u in draws:
        if u not in selected and any(w in selected for w in neighbors[u]):
            states[u].decided = True
    mobility = {u: MOBILE if u in selected else STATIONARY for u in range(n)}
    return ScheduleDecision(mobility, epochs)


def maximal_independent_set(neighbors: Sequence[frozenset], seed: int = 0) -> set[int]:
    """Randomized maximal independent set by repeated elimination steps."""
    states = [SchedulerState(u, rng=substream(seed, u, CH_SCHEDULE)) for u in range(len(neighbors))]
    undecided = set(range(len(neighbors)))
    chosen: set[int] = set()
    while undecided:
        draws = {u: states[u].draw() for u in undecided}
        picked = {u for u in undecided
                  if luby_round(states[u], {w: draws[w] for w in neighbors[u] if w in undecided}, draws[u])}
        chosen |= picked
        undecided -= picked
        undecided -= {w for u in picked for w in neighbors[u]}
    return chosen


def straw_man_schedule(round_index: int, n: int) -> int:
    """Round-robin baseline: the single mobile robot this round."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return round_index % n


def is_independent(mobile, neighbors: Sequence[frozenset]) -> bool:
    return all(not (neighbors[u] & mobile) for u in mobile)
