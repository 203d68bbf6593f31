"""Planar rigid-frame arithmetic shared by the simulator and the localizers.

Conventions: a robot's local frame has its origin at the robot and its x-axis
along its heading.  ``relative_pose(u, w)`` expresses ``w`` in ``u``'s frame.
Absolute angles are normalized to [0, 2*pi); angular *differences* used in
error metrics are wrapped to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Map ``a`` into [0, 2*pi)."""
    r = math.fmod(a, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a tiny negative can round up to exactly 2*pi
    if r >= TWO_PI:
        r = 0.0
    return r


def wrap_angle(a: float) -> float:
    """Map ``a`` into (-pi, pi]."""
    r = normalize_angle(a)
    if r > math.pi:
        r -= TWO_PI
    return r


def unit_vector(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def rotate(theta: float, v) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    x, y = float(v[0]), float(v[1])
    return np.array([c * x - s * y, s * x + c * y])


def bearing_of(v) -> float:
    """Angle of a vector in [0, 2*pi); zero for the null vector."""
    x, y = float(v[0]), float(v[1])
    if x == 0.0 and y == 0.0:
        return 0.0
    return normalize_angle(math.atan2(y, x))


@dataclass(frozen=True)
class Pose:
    """Global pose: position in meters, heading in radians."""

    x: float
    y: float
    orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "orientation", normalize_angle(float(self.orientation)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_vector(cls, p, orientation: float) -> "Pose":
        return cls(float(p[0]), float(p[1]), orientation)


@dataclass(frozen=True)
class RelativePose:
    """Pose of one robot in another robot's frame.

    ``bearing`` and ``distance`` locate the target; ``orientation`` is the
    target's heading minus the observer's heading.
    """

    bearing: float
    distance: float
    orientation: float

    def __post_init__(self):
        d = float(self.distance)
        b = float(self.bearing)
        if d < 0.0:
            d, b = -d, b + math.pi
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "bearing", normalize_angle(b) if d > 0.0 else 0.0)
        object.__setattr__(self, "orientation", normalize_angle(float(self.orientation)))

    @property
    def position(self) -> np.ndarray:
        return self.distance * unit_vector(self.bearing)

    @classmethod
    def from_position(cls, p, orientation: float) -> "RelativePose":
        p = np.asarray(p, dtype=float)
        return cls(bearing_of(p), float(math.hypot(p[0], p[1])), orientation)

    @classmethod
    def identity(cls) -> "RelativePose":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class OdometryDelta:
    """Self-motion over one round.

    ``translation`` is the robot's *previous* position expressed in its *new*
    frame and ``rotation`` its previous heading relative to the new one, so a
    stationary round is ``((0, 0), 0)``.
    """

    tx: float = 0.0
    ty: float = 0.0
    rotation: float = 0.0

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def as_relative(self) -> RelativePose:
        """The previous pose of the robot in its current frame."""
        return RelativePose.from_position(self.translation, self.rotation)

    @classmethod
    def from_relative(cls, r: RelativePose) -> "OdometryDelta":
        p = r.position
        return cls(float(p[0]), float(p[1]), wrap_angle(r.orientation))

    @property
    def scalar_count(self) -> int:
        return 3


def relative_pose(observer: Pose, target: Pose) -> RelativePose:
    p = rotate(-observer.orientation, target.position - observer.position)
    return RelativePose.from_position(p, target.orientation - observer.orientation)


def compose_relative(a_in_b: RelativePose, b_in_c: RelativePose) -> RelativePose:
    """Pose of ``a`` in ``c``'s frame given ``a`` in ``b`` and ``b`` in ``c``."""
    p = rotate(b_in_c.orientation, a_in_b.position) + b_in_c.position
    return RelativePose.from_position(p, a_in_b.orientation + b_in_c.orientation)


def inverse(a_in_b: RelativePose) -> RelativePose:
    """Pose of ``b`` in ``a``'s frame."""
    p = -rotate(-a_in_b.orientation, a_in_b.position)
    return RelativePose.from_position(p, -a_in_b.orientation)


def pose_error(estimate: RelativePose, truth: RelativePose) -> tuple[float, float]:
    """(position error in meters, wrapped orientation error in radians)."""
    dp = estimate.position - truth.position
    return float(math.hypot(dp[0], dp[1])), wrap_angle(estimate.orientation - truth.orientation)


def cycle_residual(a_j: Pose, a_k: Pose, b_j: Pose, b_k: Pose) -> np.ndarray:
    """Difference between the two global paths from ``a_j`` to ``b_k``.

    Identically zero; kept as an oracle for the localizers' constraint.
    """
    via_a = (a_k.position - a_j.position) + (b_k.position - a_k.position)
    via_b = (b_j.position - a_j.position) + (b_k.position - b_j.position)
    return via_a - via_b
