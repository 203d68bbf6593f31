import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rloc.alg2 import (
    ENTRY_SCALARS,
    MOBILE,
    STATIONARY,
    Alg2Payload,
    Alg2Robot,
    Hypothesis,
    NotATriangle,
    ZeroMotion,
    recover_orientation,
    resolve_flip,
    stationary_propagate,
    trilaterate,
    update_bearing_via_gamma,
)
from rloc.engine import MotionCommand, RoundObservation, World, WorldConfig
from rloc.geometry import TWO_PI, OdometryDelta, Pose, bearing_of, pose_error, relative_pose, wrap_angle

coord = st.floats(0, 10, allow_nan=False)
angle = st.floats(0, TWO_PI, allow_nan=False, exclude_max=True)
poses = st.builds(Pose, coord, coord, angle)


def ang_close(a, b, tol=1e-9):
    return abs(wrap_angle(a - b)) < tol


def test_trilaterate_right_angle():
    beta, gamma, cands = trilaterate(1.0, math.pi, math.sqrt(2), 1.0)
    assert beta == pytest.approx(math.pi / 2)
    assert gamma == pytest.approx(math.pi / 4)
    assert sorted(cands) == pytest.approx([math.pi / 2, 3 * math.pi / 2])


def test_trilaterate_equilateral():
    beta, gamma, _ = trilaterate(1.0, 0.3, 1.0, 1.0)
    assert beta == pytest.approx(math.pi / 3)
    assert gamma == pytest.approx(math.pi / 3)


def test_trilaterate_collinear_single_candidate():
    # observer moved straight away from the target
    beta, _, cands = trilaterate(1.0, 0.0, 2.0, 3.0)
    assert beta == 0.0 and cands == (0.0,)
    # observer moved straight toward it
    beta, _, cands = trilaterate(1.0, 0.0, 3.0, 2.0)
    assert beta == pytest.approx(math.pi) and len(cands) == 1


def test_trilaterate_clamps_tiny_violations():
    beta, _, _ = trilaterate(1.0, 0.0, 2.0, 3.0 + 1e-12)
    assert beta == 0.0


def test_trilaterate_errors():
    with pytest.raises(ZeroMotion):
        trilaterate(0.0, 0.0, 1.0, 1.0)
    with pytest.raises(NotATriangle):
        trilaterate(1.0, 0.0, 5.0, 1.0)
    with pytest.raises(NotATriangle):
        trilaterate(1.0, 0.0, 0.0, 1.0)


@settings(max_examples=1000, deadline=None)
@given(poses, st.floats(0.2, 3.0), st.floats(-math.pi, math.pi), angle, coord, coord)
def test_trilaterate_contains_true_bearing(start, step, turn, heading, tx, ty):
    target = Pose(tx, ty, heading)
    w = World(WorldConfig(robot_count=1, boundary="free"))
    w.poses = [start]
    odo = w.advance({0: MotionCommand(step * math.cos(turn), step * math.sin(turn), turn)})[0].own_odometry
    end = w.poses[0]
    d_prev = float(np.linalg.norm(start.position - target.position))
    d_curr = float(np.linalg.norm(end.position - target.position))
    if min(d_prev, d_curr) < 1e-3:
        return
    ell, alpha = math.hypot(odo.tx, odo.ty), math.atan2(odo.ty, odo.tx)
    beta, gamma, cands = trilaterate(ell, alpha, d_prev, d_curr)
    assert 0.0 <= beta <= math.pi and 0.0 <= gamma <= math.pi
    true_bearing = relative_pose(end, target).bearing
    assert min(abs(wrap_angle(c - true_bearing)) for c in cands) < 1e-5
    # the pair is symmetric about the motion direction
    if len(cands) == 2:
        assert ang_close(cands[0] + cands[1], 2 * alpha, 1e-9)


def test_recover_orientation_examples():
    # facing each other on the x-axis
    assert recover_orientation(0.0, 0.0) == pytest.approx(math.pi)
    # same heading, target on the left
    assert ang_close(recover_orientation(math.pi / 2, 3 * math.pi / 2), 0.0)


@settings(max_examples=1000, deadline=None)
@given(poses, poses)
def test_recover_orientation_matches_ground_truth(u, w):
    if np.linalg.norm(u.position - w.position) < 1e-6:
        return
    wu, uw = relative_pose(u, w), relative_pose(w, u)
    assert ang_close(recover_orientation(wu.bearing, uw.bearing), wu.orientation, 1e-7)


def test_update_bearing_zero_gamma():
    assert update_bearing_via_gamma(1.2, 0.0, 1) == pytest.approx(1.2)
    assert update_bearing_via_gamma(1.2, 0.0, -1) == pytest.approx(1.2)


def test_update_bearing_worked_example():
    # observer (0,0) -> (1,0) facing 0, target at (1,1) facing 0
    before, after, target = Pose(0, 0, 0), Pose(1, 0, 0), Pose(1, 1, 0)
    theta_prev = relative_pose(target, before).bearing
    assert theta_prev == pytest.approx(5 * math.pi / 4)
    beta, gamma, cands = trilaterate(1.0, math.pi, math.sqrt(2), 1.0)
    assert gamma == pytest.approx(math.pi / 4)
    assert cands[0] == pytest.approx(relative_pose(after, target).bearing)
    updated = update_bearing_via_gamma(theta_prev, gamma, 1)
    assert updated == pytest.approx(3 * math.pi / 2)
    assert updated == pytest.approx(relative_pose(target, after).bearing)
    # the other branch is inconsistent with ground truth
    assert not ang_close(update_bearing_via_gamma(theta_prev, gamma, -1), updated, 1e-3)


def test_stationary_propagate_zero_odometry():
    h = Hypothesis.polar(1.0, 2.0, 0.5)
    out = stationary_propagate(h, OdometryDelta())
    assert out.x == pytest.approx(h.x) and out.y == pytest.approx(h.y) and out.orientation == pytest.approx(0.5)


def test_stationary_propagate_rotation_in_place():
    h = Hypothesis.polar(1.0, 2.0, 0.5)
    out = stationary_propagate(h, OdometryDelta(0.0, 0.0, math.pi / 2))
    assert out.bearing == pytest.approx(1.0) and out.distance == pytest.approx(2.0)
    assert ang_close(out.orientation, 0.5 - math.pi / 2)


def test_stationary_propagate_requires_heading():
    with pytest.raises(ValueError):
        stationary_propagate(Hypothesis(1.0, 1.0), OdometryDelta(1.0, 0.0, 0.0))


@settings(max_examples=300, deadline=None)
@given(poses, poses, st.floats(-3, 3), st.floats(-3, 3), st.floats(-math.pi, math.pi))
def test_stationary_propagate_matches_ground_truth(u, w, tx, ty, rot):
    world = World(WorldConfig(robot_count=2, boundary="free"))
    world.poses = [u, w]
    before = world.ground_truth_relative(0, 1)
    odo = world.advance({1: MotionCommand(tx, ty, rot)})[1].own_odometry
    out = stationary_propagate(Hypothesis(*before.position, before.orientation), odo)
    after = world.ground_truth_relative(0, 1)
    assert np.allclose([out.x, out.y], after.position, atol=1e-9)
    assert ang_close(out.orientation, after.orientation, 1e-9)


def test_resolve_flip_without_prediction():
    c = [Hypothesis.polar(0.5, 2.0), Hypothesis.polar(1.5, 2.0)]
    choice, resolved, matched = resolve_flip(c, None)
    assert choice is c[0] and not resolved and matched is None


def test_resolve_flip_picks_consistent_candidate():
    c = [Hypothesis.polar(0.5, 2.0), Hypothesis.polar(1.5, 2.0)]
    choice, resolved, matched = resolve_flip(c, [Hypothesis.polar(1.5, 2.0), Hypothesis.polar(3.0, 2.0)])
    assert choice is c[1] and resolved
    assert matched.bearing == pytest.approx(1.5)


def test_resolve_flip_collinear_motions_stay_ambiguous():
    # mirror pair about the x-axis, predicted through another move along x
    c = [Hypothesis(2.0, 1.0), Hypothesis(2.0, -1.0)]
    predicted = [Hypothesis(2.0, 1.0), Hypothesis(2.0, -1.0)]
    _, resolved, _ = resolve_flip(c, predicted)
    assert not resolved


def test_payload_is_affine_in_neighbors():
    r = Alg2Robot(0)
    for n in (0, 1, 4, 9):
        r.last_neighbors = frozenset(range(1, n + 1))
        p = r.payload(RoundObservation(0, 0, r.last_neighbors, {}, OdometryDelta(1, 2, 3)), MOBILE)
        assert p.scalar_count == 3 + 1 + ENTRY_SCALARS * n
    stationary = r.payload(RoundObservation(0, 0, frozenset(), {}, OdometryDelta(1, 2, 3)), STATIONARY)
    assert stationary.odometry == OdometryDelta() and not stationary.mobile


def run_schedule(world, robots, schedule, rounds):
    """Drive robots with a fixed (mobile set, commands) per round; return estimates and truth per round."""
    n = world.n
    moved = {u: STATIONARY for u in range(n)}
    obs = world.observe()
    history = []
    for k in range(rounds):
        world.deliver(obs, lambda u, o: robots[u].payload(o, moved[u]))
        est = {u: robots[u].run_round(obs[u], moved[u]) for u in range(n)}
        truth = {(u, v): world.ground_truth_relative(u, v) for u in range(n) for v in range(n) if u != v}
        history.append((est, truth))
        mobile, commands = schedule(k)
        obs = world.advance(commands)
        moved = {u: MOBILE if u in mobile else STATIONARY for u in range(n)}
    return history


SIDESTEPS = [({0}, {0: MotionCommand(0.2, 1.5, 0.3)}), ({1}, {1: MotionCommand(-0.1, -1.4, -0.2)}),
             ({0}, {0: MotionCommand(0.3, -1.6, 0.5)}), ({1}, {1: MotionCommand(0.2, 1.5, 0.4)}),
             ({0}, {0: MotionCommand(-0.2, 1.2, -0.4)}), ({1}, {1: MotionCommand(0.1, -1.3, 0.2)}),
             ({0}, {0: MotionCommand(0.3, -1.4, 0.3)}), ({1}, {1: MotionCommand(0.1, 1.3, -0.3)})]


def sidestep_world():
    world = World(WorldConfig(robot_count=2, comm_radius=20.0, boundary="free"))
    world.poses = [Pose(2.0, 5.0, 0.1), Pose(7.0, 5.2, 2.9)]
    return world


def test_bootstrapped_estimates_are_exact():
    hist = run_schedule(sidestep_world(), [Alg2Robot(u) for u in range(2)], lambda k: SIDESTEPS[k], len(SIDESTEPS))
    checked = set()
    for est, truth in hist:
        for u, d in est.items():
            for v, e in d.items():
                if e.bootstrapped:
                    pe, oe = pose_error(e.estimate, truth[u, v])
                    assert pe < 1e-9 and abs(oe) < 1e-9
                    checked.add(u)
    assert checked == {0, 1}


def test_both_stationary_keeps_estimates():
    sched = SIDESTEPS[:7]
    hist = run_schedule(sidestep_world(), [Alg2Robot(u) for u in range(2)],
                        lambda k: sched[k] if k < len(sched) else (set(), {}), 11)
    est, truth = hist[-1]
    final = est[0][1]
    assert final.bootstrapped
    for e, _ in hist[-4:]:
        assert e[0][1].estimate == final.estimate
    pe, oe = pose_error(final.estimate, truth[0, 1])
    assert pe < 1e-9 and abs(oe) < 1e-9


def test_trilateration_bias_within_band():
    # fixed geometry: observer steps 2 m along x, target 4 m away
    rng = np.random.default_rng(1)
    before, after, target = np.array([0.0, 0.0]), np.array([2.0, 0.0]), np.array([3.0, 3.5])
    true = bearing_of(target - after)
    sigma, n = 0.01, 10_000
    errs = []
    for _ in range(n):
        d_prev = np.linalg.norm(target - before) + sigma * rng.standard_normal()
        d_curr = np.linalg.norm(target - after) + sigma * rng.standard_normal()
        _, _, cands = trilaterate(2.0, math.pi, d_prev, d_curr)
        errs.append(min((wrap_angle(c - true) for c in cands), key=abs))
    errs = np.array(errs)
    assert abs(errs.mean()) < 4 * errs.std() / math.sqrt(n)


def test_payload_dataclass_count():
    p = Alg2Payload(OdometryDelta(), True, {1: (0.0, 1.0, 0.0, 1.0, 0.0)})
    assert p.scalar_count == 3 + 1 + ENTRY_SCALARS
