"""Localization without motion coordination.

Each robot broadcasts only its own per-round odometry.  For every neighbor
seen over a contiguous window of ``delta + 1`` rounds it builds the windowed
range constraint

    | -a_j + R(phi) b_j + d_k psi(theta) | = d_j,   j = k-delta .. k-1

where ``a_j`` (``b_j``) is the observer's (peer's) past position in its own
current frame, and solves for the peer's bearing ``theta`` and relative
heading ``phi`` by seeded least squares on the torus.

With ``delta = 2`` the system is square and generically has several exact
roots, so :class:`Alg1Robot` keeps every consistent root as a hypothesis and
prunes them round to round against the previous estimate carried forward by
both robots' odometry.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .engine import NoiseSpec, RoundObservation
from .geometry import TWO_PI, OdometryDelta, Pose, RelativePose, relative_pose, wrap_angle

UNIQUE = "unique"
FLIP = "flip"
ROTATION = "rotation"
UNDERDETERMINED = "underdetermined"
AMBIGUITIES = (UNIQUE, FLIP, ROTATION, UNDERDETERMINED)

# minima closer than this on the torus are the same solution
SAME_POINT = 1e-6
# minima further apart than this are distinct for classification
DISTINCT = 0.1
EXACT_DISTINCT = 1e-5
# smallest / largest singular value below this marks a flat valley
FLAT_RATIO = 1e-6
# hypotheses carried per neighbor; a rotation valley would otherwise keep
# every refined point along it
MAX_TRACKED = 16


class UnderdeterminedWindow(ValueError):
    pass


def _compose(a, b):
    """Float-tuple version of :func:`compose_relative` on (x, y, rot)."""
    ax, ay, ar = a
    bx, by, br = b
    c, s = math.cos(br), math.sin(br)
    return (c * ax - s * ay + bx, s * ax + c * ay + by, ar + br)


def integrate_odometry(deltas: Sequence[OdometryDelta]) -> tuple[np.ndarray, float]:
    """Compose per-round deltas into the pose change over the whole span.

    ``deltas`` are ordered oldest first and the result is the robot's pose at
    the start of the span expressed in its frame at the end.
    """
    acc = (0.0, 0.0, 0.0)
    for dlt in reversed(deltas):
        acc = _compose((dlt.tx, dlt.ty, dlt.rotation), acc)
    return np.array([acc[0], acc[1]]), wrap_angle(acc[2])


def _suffix_positions(deltas: Sequence[OdometryDelta]) -> np.ndarray:
    """Past positions in the current frame for every start of the window."""
    n = len(deltas)
    out = np.zeros((n, 2))
    acc = (0.0, 0.0, 0.0)
    for i in range(n - 1, -1, -1):
        dlt = deltas[i]
        acc = _compose((dlt.tx, dlt.ty, dlt.rotation), acc)
        out[i] = acc[0], acc[1]
    return out


@dataclass
class ConstraintWindow:
    """Operands of the windowed constraint for one (observer, peer) pair.

    Row ``j`` of ``self_positions`` / ``peer_positions`` is where the observer
    / peer was at round ``k - delta + j``, in its own round-k frame.
    """

    distances: np.ndarray       # d_j, length delta
    current_distance: float     # d_k
    self_positions: np.ndarray  # (delta, 2)
    peer_positions: np.ndarray  # (delta, 2)

    @property
    def delta(self) -> int:
        return int(self.distances.shape[0])

    @classmethod
    def from_odometry(cls, distances: Sequence[float], own: Sequence[OdometryDelta],
                      peer: Sequence[OdometryDelta]) -> "ConstraintWindow":
        """``distances`` covers rounds k-delta..k; ``own``/``peer`` cover k-delta+1..k."""
        delta = len(distances) - 1
        if len(own) != delta or len(peer) != delta:
            raise ValueError("need exactly one odometry delta per round after the first")
        return cls(
            np.asarray(distances[:-1], dtype=float),
            float(distances[-1]),
            _suffix_positions(own),
            _suffix_positions(peer),
        )

    @classmethod
    def from_poses(cls, a: Sequence[Pose], b: Sequence[Pose],
                   distances: Sequence[float] | None = None) -> "ConstraintWindow":
        """Noiseless window from ground-truth trajectories (oldest first)."""
        ak, bk = a[-1], b[-1]
        if distances is None:
            distances = [float(np.linalg.norm(q.position - p.position)) for p, q in zip(a, b)]
        return cls(
            np.asarray(distances[:-1], dtype=float),
            float(distances[-1]),
            np.array([relative_pose(ak, p).position for p in a[:-1]]).reshape(-1, 2),
            np.array([relative_pose(bk, q).position for q in b[:-1]]).reshape(-1, 2),
        )

    def arrays(self):
        a, b = self.self_positions, self.peer_positions
        return (np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1]),
                np.ascontiguousarray(b[:, 0]), np.ascontiguousarray(b[:, 1]),
                np.ascontiguousarray(self.distances), self.current_distance)


def residual(theta: float, phi: float, window: ConstraintWindow) -> np.ndarray:
    if window.delta < 2:
        raise UnderdeterminedWindow(f"window needs delta >= 2, got {window.delta}")
    return _kernels.residuals(float(theta), float(phi), *window.arrays())


@dataclass
class LocalizationResult:
    estimate: RelativePose
    residual_rms: float
    ambiguity: str
    alternates: list[RelativePose] = field(default_factory=list)
    # every near-optimal root (estimate first); used to track hypotheses
    candidates: list[RelativePose] = field(default_factory=list)
    # the estimate continues a root tracked from the previous round; a lone
    # root in a fresh window may be a spurious one whose twin was missed
    confirmed: bool = False
    # near-optimal roots of this round's window alone, before tracking
    window: list[RelativePose] = field(default_factory=list)

    @property
    def is_unique(self) -> bool:
        return self.ambiguity == UNIQUE

    def orientation_consistent(self, spread: float = DISTINCT) -> bool:
        """True when all reported minima agree on the relative heading."""
        return all(abs(wrap_angle(a.orientation - self.estimate.orientation)) <= spread
                   for a in self.alternates)

    def heading_pinned(self, spread: float = DISTINCT) -> bool:
        """True when every near-optimal root of the window agrees with the estimated heading."""
        roots = self.window or self.candidates
        return all(abs(wrap_angle(a.orientation - self.estimate.orientation)) <= spread for a in roots)


@dataclass(frozen=True)
class SolverConfig:
    grid: int = 64
    profile_samples: int = 2048
    max_seeds: int = 24
    max_profile_seeds: int = 96
    max_iter: int = 100
    xtol: float = 1e-10


# Under noise, minima closer than DISTINCT merge anyway, so the profile only
# needs to resolve well below that spacing.
NOISY_SOLVER = SolverConfig(profile_samples=512)


def find_minima(window: ConstraintWindow, seeds: Sequence[tuple[float, float]] = (),
                config: SolverConfig = SolverConfig(), arrs=None) -> np.ndarray:
    """All distinct refined minima as rows (theta, phi, cost), best first."""
    if arrs is None:
        arrs = window.arrays()
    extra = np.asarray(seeds, dtype=float).reshape(-1, 2) if len(seeds) else np.empty((0, 2))
    return _kernels.find_minima(*arrs, np.ascontiguousarray(extra), config.grid, config.max_seeds,
                                config.profile_samples, config.max_profile_seeds, config.max_iter,
                                config.xtol, SAME_POINT)


def _flatness(theta, phi, arrs):
    """(is_flat, singular values, null direction) of the residual Jacobian at a point."""
    _, jac = _kernels.residuals_jacobian(theta, phi, *arrs)
    a = float(jac[:, 0] @ jac[:, 0])
    b = float(jac[:, 0] @ jac[:, 1])
    c = float(jac[:, 1] @ jac[:, 1])
    # eigen-decomposition of the 2 x 2 normal matrix
    lmax = 0.5 * (a + c) + math.hypot(0.5 * (a - c), b)
    lmin = max(0.0, (a * c - b * b) / lmax) if lmax > 0.0 else 0.0
    smax, smin = math.sqrt(lmax), math.sqrt(lmin)
    if abs(b) > 1e-300:
        null = np.array([b, lmin - a])
        null /= np.linalg.norm(null)
    else:
        null = np.array([1.0, 0.0]) if a <= c else np.array([0.0, 1.0])
    flat = smax <= 1e-12 or smin < FLAT_RATIO * smax
    return flat, (smax, smin), null


def solve(window: ConstraintWindow, tol: float = 1e-6, seeds: Sequence[tuple[float, float]] = (),
          config: SolverConfig = SolverConfig(), distinct: float | None = None) -> LocalizationResult:
    """Globally minimize the windowed range residual over (theta, phi).

    Minima within ``tol`` (meters RMS) of the best are all reported.  Several
    isolated minima give ``flip``; a flat valley along the bearing with a
    fixed heading gives ``rotation``; a window with no usable information
    gives ``underdetermined``.  Minima closer than ``distinct`` on the torus
    count as one; by default that is :data:`DISTINCT` under noise and
    :data:`EXACT_DISTINCT` for a noiseless tolerance.
    """
    if distinct is None:
        distinct = DISTINCT if tol > 1e-6 else EXACT_DISTINCT
    delta = window.delta
    if delta < 2:
        raise UnderdeterminedWindow(f"window needs delta >= 2, got {delta}")
    arrs = window.arrays()
    minima = find_minima(window, seeds, config, arrs)
    rms = np.sqrt(minima[:, 2] / delta)
    best_rms = float(rms[0])
    near = minima[rms <= best_rms + tol]
    dk = window.current_distance

    def as_pose(t, p):
        return RelativePose(t, dk, p)

    estimate = as_pose(near[0, 0], near[0, 1])
    candidates = [as_pose(t, p) for t, p, _ in near]

    flat, s, null = _flatness(near[0, 0], near[0, 1], arrs)
    if flat:
        if s[0] <= 1e-12 or abs(null[0]) < 0.9:
            return LocalizationResult(estimate, best_rms, UNDERDETERMINED, candidates[1:], candidates)
        # sample the valley: same heading, bearings around the circle
        alternates = []
        for m in range(1, 8):
            t = near[0, 0] + m * TWO_PI / 8
            r = _kernels.residuals(t, near[0, 1], *arrs)
            if math.sqrt(float(r @ r) / delta) <= best_rms + tol:
                alternates.append(as_pose(t, near[0, 1]))
        if alternates:
            return LocalizationResult(estimate, best_rms, ROTATION, alternates, candidates)

    clusters = _kernels.unique_rows(near, distinct)
    if len(clusters) == 1:
        return LocalizationResult(estimate, best_rms, UNIQUE, [], candidates)
    alternates = [as_pose(t, p) for t, p, _ in clusters[1:]]
    return LocalizationResult(estimate, best_rms, FLIP, alternates, candidates)


def predict(previous: RelativePose, own: OdometryDelta, peer: OdometryDelta) -> RelativePose:
    """Carry last round's estimate of the peer into this round's frames."""
    p = previous.position
    in_new_self = _compose((p[0], p[1], previous.orientation), (own.tx, own.ty, own.rotation))
    # peer's new pose in its old frame is the inverse of its odometry
    c, s = math.cos(peer.rotation), math.sin(peer.rotation)
    peer_new_in_old = (-(c * peer.tx + s * peer.ty), -(-s * peer.tx + c * peer.ty), -peer.rotation)
    x, y, r = _compose(peer_new_in_old, in_new_self)
    return RelativePose.from_position((x, y), r)


def _mismatch(a: RelativePose, b: RelativePose) -> float:
    dx = a.distance * math.cos(a.bearing) - b.distance * math.cos(b.bearing)
    dy = a.distance * math.sin(a.bearing) - b.distance * math.sin(b.bearing)
    return math.hypot(dx, dy) + abs(wrap_angle(a.orientation - b.orientation))


def _tracked(candidates: Sequence[RelativePose]) -> list[RelativePose]:
    out: list[RelativePose] = []
    for c in candidates:
        if all(math.hypot(wrap_angle(c.bearing - o.bearing), wrap_angle(c.orientation - o.orientation))
               > EXACT_DISTINCT for o in out):
            out.append(c)
            if len(out) == MAX_TRACKED:
                break
    return out


@dataclass
class _Track:
    distances: deque
    peer_odometry: deque
    last_round: int
    hypotheses: list[RelativePose] = field(default_factory=list)


class Alg1Robot:
    """Per-robot state for localization without coordination."""

    def __init__(self, robot_id: int, delta: int = 2, noise: NoiseSpec | None = None,
                 tol: float | None = None, solver: SolverConfig | None = None):
        if delta < 2:
            raise UnderdeterminedWindow(f"delta must be >= 2, got {delta}")
        self.id = robot_id
        self.delta = delta
        self.noise = noise or NoiseSpec()
        self.tol = tol
        if solver is None:
            solver = SolverConfig() if self.noise.is_zero else NOISY_SOLVER
        self.solver = solver
        self.own_odometry: deque = deque(maxlen=delta)
        self.tracks: dict[int, _Track] = {}
        self.last_round: int | None = None
        self.estimates: dict[int, LocalizationResult] = {}

    def payload(self, observation: RoundObservation) -> OdometryDelta:
        """This round's broadcast: own odometry only, constant size."""
        return observation.own_odometry

    def _tolerances(self, distance: float) -> tuple[float, float, float]:
        scale = self.noise.scale(distance)
        tol = self.tol if self.tol is not None else max(1e-6, 3.0 * scale)
        margin = max(1e-6, 3.0 * scale)
        gate = 1e-4 + 10.0 * scale
        return tol, margin, gate

    def run_round(self, observation: RoundObservation) -> dict[int, LocalizationResult]:
        k = observation.round
        if self.last_round is not None and k != self.last_round + 1:
            self.own_odometry.clear()
            self.tracks.clear()
        self.last_round = k
        self.own_odometry.append(observation.own_odometry)

        for w in list(self.tracks):
            if w not in observation.neighbor_ids or w not in observation.inbox:
                del self.tracks[w]

        results: dict[int, LocalizationResult] = {}
        for w in sorted(observation.neighbor_ids):
            if w not in observation.inbox:
                continue
            d = observation.distances[w]
            tr = self.tracks.get(w)
            if tr is None:
                tr = self.tracks[w] = _Track(deque(maxlen=self.delta + 1), deque(maxlen=self.delta), k)
                tr.distances.append(d)
                continue
            tr.distances.append(d)
            tr.peer_odometry.append(observation.inbox[w])
            tr.last_round = k
            if len(tr.distances) < self.delta + 1 or len(self.own_odometry) < self.delta:
                continue
            results[w] = self._localize(tr, d)
        self.estimates = results
        return results

    def _localize(self, tr: _Track, dk: float) -> LocalizationResult:
        own = list(self.own_odometry)
        window = ConstraintWindow.from_odometry(list(tr.distances), own, list(tr.peer_odometry))
        tol, margin, gate = self._tolerances(dk)
        predictions = [predict(h, own[-1], tr.peer_odometry[-1]) for h in tr.hypotheses]
        seeds = [(p.bearing, p.orientation) for p in predictions]
        res = solve(window, tol=tol, seeds=seeds, config=self.solver)
        if not predictions or res.ambiguity in (ROTATION, UNDERDETERMINED):
            tr.hypotheses = _tracked(res.candidates)
            return res
        scores = [min(_mismatch(c, p) for p in predictions) for c in res.candidates]
        order = np.argsort(scores, kind="stable")
        best = float(scores[order[0]])
        if best > gate:
            # lost track: start over from this window alone
            tr.hypotheses = _tracked(res.candidates)
            return res
        keep = [res.candidates[i] for i in order if scores[i] <= best + margin]
        tr.hypotheses = _tracked(keep)
        chosen = keep[0]
        r = _kernels.residuals(chosen.bearing, chosen.orientation, *window.arrays())
        rms = math.sqrt(float(r @ r) / window.delta)
        if len(keep) == 1:
            return LocalizationResult(chosen, rms, UNIQUE, [], [chosen], True, res.candidates)
        return LocalizationResult(chosen, rms, FLIP, keep[1:], keep, True, res.candidates)
