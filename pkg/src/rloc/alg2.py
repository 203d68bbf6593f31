"""Localization with stop/move coordination.

A mobile robot trilaterates every stationary neighbor from two ranges and its
own odometry (law of cosines), which fixes the neighbor's bearing up to a
mirror flip across the motion direction.  The neighbor's broadcast bearing of
the mobile robot, corrected by the triangle's angle at the neighbor, yields
the relative heading.  Stationary robots carry their estimates of mobile
neighbors forward with the odometry those neighbors broadcast.

Each neighbor entry keeps up to :data:`MAX_HYPOTHESES` pose hypotheses, each
with a first-order position and heading standard deviation that grows as it
is propagated.  A flip is resolved once exactly one trilateration candidate
agrees with the propagated hypotheses by a margin that beats those
deviations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .engine import NoiseSpec, RoundObservation
from .geometry import OdometryDelta, RelativePose, normalize_angle, wrap_angle

MOBILE = "mobile"
STATIONARY = "stationary"

CLAMP_TOL = 1e-9
MAX_HYPOTHESES = 8
# trilaterations whose bearing or gamma amplifies a unit range/odometry
# error by more than this many radians per meter are skipped; purely
# geometric, so the accepted geometry does not depend on the noise level
MAX_CONDITION = 2.0
# margins are compared against this many combined standard deviations
MARGIN_SIGMAS = 3.0
GATE_SIGMAS = 10.0
EXACT = 1e-6


class TrilaterationError(ValueError):
    pass


class NotATriangle(TrilaterationError):
    pass


class ZeroMotion(TrilaterationError):
    pass


def _acos_checked(x: float) -> float:
    if abs(x) > 1.0 + CLAMP_TOL or math.isnan(x):
        raise NotATriangle(f"cosine argument {x!r} outside [-1, 1]")
    return math.acos(min(1.0, max(-1.0, x)))


def trilaterate(ell: float, alpha: float, d_prev: float, d_curr: float):
    """Bearing of a stationary target after the observer moved.

    ``ell``/``alpha`` are the length and angle of the observer's previous
    position in its current frame.  Returns ``(beta, gamma, candidates)``:
    ``beta`` is the angle at the observer between the old position and the
    target, ``gamma`` the angle at the target, and ``candidates`` the bearings
    ``alpha - beta`` and ``alpha + beta`` (one value when they coincide).
    """
    if not ell > 1e-12:
        raise ZeroMotion("observer did not move")
    if not (d_prev > 0.0 and d_curr > 0.0):
        raise NotATriangle("ranges must be positive")
    beta = _acos_checked((ell * ell + d_curr * d_curr - d_prev * d_prev) / (2.0 * ell * d_curr))
    gamma = _acos_checked((d_curr * d_curr + d_prev * d_prev - ell * ell) / (2.0 * d_curr * d_prev))
    if beta == 0.0 or beta == math.pi:
        return beta, gamma, (normalize_angle(alpha - beta),)
    return beta, gamma, (normalize_angle(alpha - beta), normalize_angle(alpha + beta))


def angle_std(ell: float, d_prev: float, d_curr: float, beta: float, gamma: float,
              sd: float, sl: float) -> tuple[float, float]:
    """First-order std of the bearing ``alpha -+ beta`` and of ``gamma``.

    ``sd`` is the range noise and ``sl`` the odometry translation noise.
    Skinny triangles make the arccos steep, so both blow up as the observer
    moves along the line of sight.
    """
    p, k, l = d_prev, d_curr, ell
    db = math.hypot(math.hypot(p / (l * k) * sd, (k * k - l * l + p * p) / (2 * l * k * k) * sd),
                    (l * l - k * k + p * p) / (2 * l * l * k) * sl)
    dg = math.hypot(math.hypot((p * p - k * k + l * l) / (2 * k * p * p) * sd,
                               (k * k - p * p + l * l) / (2 * k * k * p) * sd), l / (k * p) * sl)
    sb, sg = math.sin(beta), math.sin(gamma)
    s_beta = db / sb if sb > 0.0 else (0.0 if db == 0.0 else math.inf)
    s_gamma = dg / sg if sg > 0.0 else (0.0 if dg == 0.0 else math.inf)
    return math.hypot(s_beta, sl / l), s_gamma


def update_bearing_via_gamma(theta_prev_self_in_target: float, gamma: float, branch: int) -> float:
    """Target-frame bearing of the observer after it moved.

    ``branch`` is +1 for the ``alpha - beta`` candidate and -1 for
    ``alpha + beta``: the triangle keeps its orientation in both frames.
    """
    return normalize_angle(theta_prev_self_in_target + (1 if branch >= 0 else -1) * gamma)


def recover_orientation(theta_target_in_self: float, theta_self_in_target: float) -> float:
    """Heading of the target relative to the observer from the two mutual bearings."""
    return normalize_angle(theta_target_in_self - theta_self_in_target + math.pi)


@dataclass(frozen=True)
class Hypothesis:
    """One candidate pose of a neighbor; ``orientation`` is None until known.

    ``sigma`` (meters) and ``sigma_o`` (radians) are rough standard
    deviations of the position and heading.
    """

    x: float
    y: float
    orientation: float | None = None
    sigma: float = 0.0
    sigma_o: float = 0.0

    @property
    def bearing(self) -> float:
        return normalize_angle(math.atan2(self.y, self.x)) if (self.x or self.y) else 0.0

    @property
    def distance(self) -> float:
        return math.hypot(self.x, self.y)

    @classmethod
    def polar(cls, bearing: float, distance: float, orientation: float | None = None,
              sigma: float = 0.0, sigma_o: float = 0.0) -> "Hypothesis":
        return cls(distance * math.cos(bearing), distance * math.sin(bearing), orientation, sigma, sigma_o)

    def as_relative(self) -> RelativePose:
        o = self.orientation if self.orientation is not None else math.nan
        return RelativePose(self.bearing, self.distance, o)

    def gap(self, other: "Hypothesis") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _translation_sigma(noise: NoiseSpec) -> float:
    return math.hypot(noise.sigma_x, noise.sigma_y)


def stationary_propagate(entry: Hypothesis, peer_odometry: OdometryDelta,
                         noise: NoiseSpec | None = None) -> Hypothesis:
    """Carry a neighbor's pose forward through the odometry it broadcast.

    Requires the neighbor's heading; the observer did not move.
    """
    if entry.orientation is None:
        raise ValueError("cannot propagate a neighbor without its heading")
    phi_new = entry.orientation - peer_odometry.rotation
    c, s = math.cos(phi_new), math.sin(phi_new)
    tx, ty = peer_odometry.tx, peer_odometry.ty
    sigma, sigma_o = entry.sigma, entry.sigma_o
    if noise is not None:
        sigma_o += noise.sigma_phi
        sigma += math.hypot(tx, ty) * sigma_o + _translation_sigma(noise)
    return Hypothesis(entry.x - (c * tx - s * ty), entry.y - (s * tx + c * ty), normalize_angle(phi_new),
                      sigma, sigma_o)


def _self_motion(h: Hypothesis, own: OdometryDelta, noise: NoiseSpec) -> Hypothesis:
    """Pose of a stationary neighbor after the observer moved by ``own``."""
    c, s = math.cos(own.rotation), math.sin(own.rotation)
    o = None if h.orientation is None else normalize_angle(h.orientation + own.rotation)
    sigma = h.sigma + _translation_sigma(noise) + noise.sigma_phi * h.distance
    return Hypothesis(c * h.x - s * h.y + own.tx, s * h.x + c * h.y + own.ty, o,
                      sigma, h.sigma_o + noise.sigma_phi)


def resolve_flip(candidates: Sequence[Hypothesis], predicted: Hypothesis | Sequence[Hypothesis] | None,
                 threshold: float = EXACT):
    """Pick the trilateration candidate that agrees with the prediction.

    Returns ``(choice, resolved, matched)`` where ``matched`` is the
    prediction closest to the choice (None without predictions).  The flip is
    resolved when the runner-up is further from its closest prediction by
    more than ``threshold`` plus :data:`MARGIN_SIGMAS` combined deviations.
    Without a prediction the ``alpha - beta`` candidate is returned
    unresolved.
    """
    if predicted is None:
        predicted = []
    elif isinstance(predicted, Hypothesis):
        predicted = [predicted]
    if not predicted:
        return candidates[0], False, None
    scored = []
    for c in candidates:
        best = min(predicted, key=c.gap)
        scored.append((c.gap(best), c, best))
    scored.sort(key=lambda t: t[0])
    gap, choice, matched = scored[0]
    if len(scored) == 1:
        return choice, False, matched
    margin = scored[1][0] - gap
    return choice, margin > threshold + MARGIN_SIGMAS * (choice.sigma + matched.sigma), matched


@dataclass
class Entry:
    """This robot's knowledge of one neighbor (a member of the bearing set)."""

    hypotheses: list[Hypothesis]
    resolved: bool = False
    orientation_resolved: bool = False

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]

    @property
    def bootstrapped(self) -> bool:
        return self.resolved and self.orientation_resolved and self.best.orientation is not None


# id, bearing, distance, orientation, resolved flag, sigma
ENTRY_SCALARS = 6


@dataclass(frozen=True)
class Alg2Payload:
    odometry: OdometryDelta
    mobile: bool
    # neighbor id -> (bearing, distance, orientation, resolved, sigma); NaN when unknown
    bearings: Mapping[int, tuple[float, float, float, float, float]] = field(default_factory=dict)

    @property
    def scalar_count(self) -> int:
        return self.odometry.scalar_count + 1 + ENTRY_SCALARS * len(self.bearings)


@dataclass
class Alg2Estimate:
    estimate: RelativePose
    resolved: bool
    orientation_resolved: bool

    @property
    def bootstrapped(self) -> bool:
        return self.resolved and self.orientation_resolved and not math.isnan(self.estimate.orientation)


ZERO = OdometryDelta()
UNKNOWN = (math.nan, math.nan, math.nan, 0.0, math.nan)


class Alg2Robot:
    """Per-robot state for localization with stop/move coordination."""

    def __init__(self, robot_id: int, noise: NoiseSpec | None = None):
        self.id = robot_id
        self.noise = noise or NoiseSpec()
        self.entries: dict[int, Entry] = {}
        self.last_distances: dict[int, float] = {}
        self.last_neighbors: frozenset = frozenset()
        self.estimates: dict[int, Alg2Estimate] = {}

    @property
    def _base(self) -> float:
        return EXACT if self.noise.is_zero else 0.0

    def payload(self, observation: RoundObservation, mobility: str) -> Alg2Payload:
        """Own odometry, mobility flag and the bearing set from the previous round.

        A robot that knows it stood still reports exactly zero motion.
        """
        mobile = mobility == MOBILE
        bearings = {}
        for w in sorted(self.last_neighbors):
            e = self.entries.get(w)
            if e is None:
                bearings[w] = UNKNOWN
            else:
                b = e.best
                o = b.orientation if b.orientation is not None else math.nan
                bearings[w] = (b.bearing, b.distance, o, 1.0 if e.resolved else 0.0, b.sigma)
        return Alg2Payload(observation.own_odometry if mobile else ZERO, mobile, bearings)

    def run_round(self, observation: RoundObservation, mobility: str) -> dict[int, Alg2Estimate]:
        mobile = mobility == MOBILE
        own = observation.own_odometry if mobile else ZERO
        nb = observation.neighbor_ids
        for w in list(self.entries):
            if w not in nb or w not in observation.inbox:
                del self.entries[w]

        for w in sorted(nb):
            msg = observation.inbox.get(w)
            if msg is None:
                continue
            d_k = observation.distances[w]
            d_prev = self.last_distances.get(w) if w in self.last_neighbors else None
            entry = self.entries.get(w)
            if mobile and not msg.mobile:
                if d_prev is not None:
                    self._trilaterate(w, msg, own, d_prev, d_k, entry)
            elif not mobile and msg.mobile:
                if entry is not None and d_prev is not None:
                    self._track_mobile(w, entry, msg.odometry, d_prev, d_k)
                else:
                    self.entries.pop(w, None)
            elif mobile and msg.mobile:
                # both moved: no usable geometry
                self.entries.pop(w, None)

        self.last_distances = dict(observation.distances)
        self.last_neighbors = nb
        out = {}
        for w, e in self.entries.items():
            b = e.best
            o = b.orientation if b.orientation is not None else math.nan
            est = RelativePose(b.bearing, observation.distances[w], o)
            out[w] = Alg2Estimate(est, e.resolved, e.orientation_resolved and b.orientation is not None)
        self.estimates = out
        return out

    def _trilaterate(self, w, msg: Alg2Payload, own: OdometryDelta, d_prev, d_k, entry: Entry | None):
        """Observer moved, neighbor stood still."""
        noise = self.noise
        predicted = [_self_motion(h, own, noise) for h in entry.hypotheses] if entry else []
        ell = math.hypot(own.tx, own.ty)
        alpha = math.atan2(own.ty, own.tx)
        try:
            beta, gamma, thetas = trilaterate(ell, alpha, d_prev, d_k)
            if max(angle_std(ell, d_prev, d_k, beta, gamma, 1.0, 1.0)) > MAX_CONDITION:
                raise NotATriangle("ill-conditioned triangle")
        except TrilaterationError:
            if entry is not None:
                entry.hypotheses = predicted
            return
        s_theta, s_gamma = angle_std(ell, d_prev, d_k, beta, gamma, noise.sigma_d,
                                     max(noise.sigma_x, noise.sigma_y))

        peer = msg.bearings.get(self.id, UNKNOWN)
        peer_bearing = None if math.isnan(peer[0]) else peer[0]
        peer_resolved = bool(peer[3])
        peer_sigma = peer[4] / peer[1] if peer[1] > 0 else 0.0

        sigma = noise.sigma_d + d_k * s_theta
        sigma_o = s_theta + s_gamma + peer_sigma
        candidates = []
        for i, theta in enumerate(thetas):
            orient = None
            if peer_bearing is not None:
                theta_self_in_peer = update_bearing_via_gamma(peer_bearing, gamma, 1 if i == 0 else -1)
                orient = recover_orientation(theta, theta_self_in_peer)
            candidates.append(Hypothesis.polar(theta, d_k, orient, sigma, sigma_o))

        choice, resolved, matched = resolve_flip(candidates, predicted, self._base)
        if matched is not None and choice.gap(matched) > 1e-4 + GATE_SIGMAS * (choice.sigma + matched.sigma):
            # prediction disagrees with both candidates: restart the track
            matched, resolved = None, False
        prior_resolved = entry.resolved if entry else False
        prior_orient_ok = entry.orientation_resolved if entry else False

        if matched is None:
            keep, resolved = candidates, False
        elif resolved:
            keep = [choice]
        else:
            keep = candidates
            # a symmetric geometry keeps what the track already knew
            resolved = prior_resolved and len(predicted) == 1 and len(candidates) == 1

        orient_ok = False
        new = []
        for c in keep:
            ok = peer_resolved and c.orientation is not None
            if c is choice and matched is not None and matched.orientation is not None:
                if not ok and (prior_orient_ok or c.orientation is None):
                    c, ok = replace(c, orientation=matched.orientation, sigma_o=matched.sigma_o), prior_orient_ok
                elif ok and prior_orient_ok:
                    gate = self._base + GATE_SIGMAS * (c.sigma_o + matched.sigma_o)
                    if abs(wrap_angle(c.orientation - matched.orientation)) > gate:
                        # fresh and carried headings disagree: trust neither
                        ok = False
            if c.x == choice.x and c.y == choice.y:
                orient_ok = ok
                c = replace(c)  # keep identity checks below independent of replace()
            new.append(c)
        if keep is candidates and choice is not candidates[0]:
            new.insert(0, new.pop(candidates.index(choice)))
        self.entries[w] = Entry(new, resolved, orient_ok and resolved)

    def _track_mobile(self, w, entry: Entry, odometry: OdometryDelta, d_prev, d_k):
        """Observer stood still, neighbor moved."""
        noise = self.noise
        if entry.orientation_resolved:
            entry.hypotheses = [stationary_propagate(entry.best, odometry, noise)]
            return
        # heading unverified: the range triangle at the observer fixes the
        # bearing change up to its sign; an unverified heading only labels
        # the branch it agrees with
        ell = math.hypot(odometry.tx, odometry.ty)
        sl = max(noise.sigma_x, noise.sigma_y)
        new = []
        for h in entry.hypotheses:
            guess = stationary_propagate(h, odometry, noise) if h.orientation is not None else None
            if ell <= 1e-12:
                o = guess.orientation if guess else None
                new.append(Hypothesis.polar(h.bearing, d_k, o, h.sigma, h.sigma_o))
                continue
            try:
                turn = _acos_checked((d_prev * d_prev + d_k * d_k - ell * ell) / (2.0 * d_prev * d_k))
            except NotATriangle:
                continue
            # the turn at the observer is the angle opposite the peer's step
            _, s_turn = angle_std(ell, d_prev, d_k, math.pi / 2, turn, noise.sigma_d, sl)
            sigma = h.sigma + noise.sigma_d + d_k * s_turn
            for b in (h.bearing + turn, h.bearing - turn):
                c = Hypothesis.polar(b, d_k, None, sigma, h.sigma_o)
                if guess is not None and c.gap(guess) <= self._base + MARGIN_SIGMAS * (sigma + guess.sigma):
                    c = replace(c, orientation=guess.orientation, sigma_o=guess.sigma_o)
                new.append(c)
                if turn == 0.0:
                    break
        if not new or len(new) > MAX_HYPOTHESES:
            self.entries.pop(w, None)
            return
        entry.hypotheses = new
        entry.resolved = entry.resolved and len(new) == 1
