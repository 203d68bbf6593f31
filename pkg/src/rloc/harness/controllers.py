"""Motion controllers driving the robots during experiments."""
from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..engine import MotionCommand
from ..geometry import RelativePose

MAX_TURN = math.pi / 4
STEP_MEAN = 3.0
STEP_VARIANCE = 0.5


def random_walk_controller(rng: np.random.Generator, max_turn: float = MAX_TURN,
                           step_mean: float = STEP_MEAN, step_variance: float = STEP_VARIANCE) -> MotionCommand:
    """Turn by U[-max_turn, max_turn], then drive a Normal(mean, variance) step along the new heading."""
    turn = float(rng.uniform(-max_turn, max_turn))
    step = max(0.0, float(rng.normal(step_mean, math.sqrt(step_variance))))
    return MotionCommand(step * math.cos(turn), step * math.sin(turn), turn)


def circular_mean(angles) -> float:
    angles = np.asarray(list(angles), dtype=float)
    if angles.size == 0:
        return 0.0
    s, c = np.sin(angles).sum(), np.cos(angles).sum()
    if abs(s) < 1e-15 and abs(c) < 1e-15:
        return 0.0
    return math.atan2(s, c)


def circular_variance(angles) -> float:
    angles = np.asarray(list(angles), dtype=float)
    return float(1.0 - math.hypot(np.cos(angles).mean(), np.sin(angles).mean()))


def flocking_controller(own_estimates: Mapping[int, RelativePose], speed: float = 0.3,
                        include_self: bool = True) -> MotionCommand:
    """Steer to the mean heading of the neighborhood, then step forward.

    The robot's own heading (relative orientation 0) is part of the average
    unless ``include_self`` is off; without it two robots would swap headings
    forever.
    """
    headings = [e.orientation for e in own_estimates.values()]
    if include_self and headings:
        headings.append(0.0)
    turn = circular_mean(headings)
    return MotionCommand(speed * math.cos(turn), speed * math.sin(turn), turn)
