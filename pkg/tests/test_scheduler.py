import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rloc.alg2 import MOBILE, STATIONARY
from rloc.scheduler import (
    COMPETE,
    INACTIVE,
    SchedulerState,
    is_independent,
    luby_round,
    maximal_independent_set,
    new_states,
    schedule_round,
    straw_man_schedule,
)


def adjacency(graph: nx.Graph) -> list[frozenset]:
    return [frozenset(graph.neighbors(u)) for u in range(graph.number_of_nodes())]


def test_luby_round_local_maximum():
    s = SchedulerState(3)
    assert luby_round(s, {1: 0.2, 5: 0.4}, draw=0.9)
    assert not luby_round(s, {1: 0.95}, draw=0.9)
    assert luby_round(s, {}, draw=0.0)


def test_luby_round_ties_go_to_larger_id():
    assert luby_round(SchedulerState(4), {2: 0.5}, draw=0.5)
    assert not luby_round(SchedulerState(2), {4: 0.5}, draw=0.5)


def test_empty_graph_all_mobile():
    states = new_states(6)
    d = schedule_round(states, [frozenset()] * 6)
    assert d.mobile == frozenset(range(6))
    assert all(s.phase == INACTIVE for s in states)


def test_two_robots_take_turns():
    nb = [frozenset({1}), frozenset({0})]
    states = new_states(2, seed=4)
    mobile = [schedule_round(states, nb).mobile for _ in range(12)]
    assert all(len(m) == 1 for m in mobile)
    # every two rounds both robots have moved once
    assert all(mobile[k] | mobile[k + 1] == {0, 1} for k in range(0, 12, 2))


def test_complete_graph_one_at_a_time():
    g = nx.complete_graph(5)
    states = new_states(5, seed=2)
    seen = []
    for _ in range(15):
        d = schedule_round(states, adjacency(g))
        assert len(d.mobile) == 1
        seen.extend(d.mobile)
    assert sorted(seen[:5]) == list(range(5))
    assert all(seen.count(u) == 3 for u in range(5))


def test_decision_mobility_labels():
    d = schedule_round(new_states(3), [frozenset({1}), frozenset({0, 2}), frozenset({1})])
    assert set(d.mobility) == {0, 1, 2}
    assert set(d.mobility.values()) <= {MOBILE, STATIONARY}
    assert set(d.selected_epochs) == set(d.mobile)


def test_new_states_compete():
    assert all(s.phase == COMPETE and not s.decided for s in new_states(4))


def test_mis_on_all_graphs_up_to_seven_nodes():
    atlas = nx.graph_atlas_g()
    assert len(atlas) == 1253
    for g in atlas:
        nb = adjacency(g)
        for seed in range(2):
            mis = maximal_independent_set(nb, seed)
            assert is_independent(frozenset(mis), nb)
            # maximal: every other vertex has a chosen neighbor
            assert all(nb[u] & mis for u in range(len(nb)) if u not in mis)


def test_path_of_three_within_three_epochs():
    nb = adjacency(nx.path_graph(3))
    for seed in range(50):
        states = new_states(3, seed)
        moved = set()
        for _ in range(6):
            d = schedule_round(states, nb)
            assert all(e <= 3 for e in d.selected_epochs.values())
            moved |= d.mobile
        assert moved == {0, 1, 2}


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 7), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_schedule_independent_and_fair(n, p, seed):
    g = nx.gnp_random_graph(n, p, seed=seed)
    nb = adjacency(g)
    states = new_states(n, seed)
    moves = {u: 0 for u in range(n)}
    for k in range(10 * n):
        d = schedule_round(states, nb)
        assert is_independent(d.mobile, nb)
        for u in d.mobile:
            moves[u] += 1
        for u, e in d.selected_epochs.items():
            assert e <= max(len(x) for x in nb) + 1
    assert all(m >= 2 for m in moves.values())


def test_selected_within_degree_plus_one_epochs():
    g = nx.random_geometric_graph(15, 0.4, seed=1)
    nb = adjacency(g)
    bound = max(len(x) for x in nb) + 1
    states = new_states(15, seed=1)
    for _ in range(200):
        for e in schedule_round(states, nb).selected_epochs.values():
            assert e <= bound


def test_straw_man_round_robin():
    assert [straw_man_schedule(k, 1) for k in range(3)] == [0, 0, 0]
    movers = [straw_man_schedule(k, 5) for k in range(10)]
    assert all(movers.count(u) == 2 for u in range(5))
    with pytest.raises(ValueError):
        straw_man_schedule(0, 0)


def test_is_independent():
    nb = [frozenset({1}), frozenset({0, 2}), frozenset({1})]
    assert is_independent(frozenset({0, 2}), nb)
    assert not is_independent(frozenset({0, 1}), nb)
    assert is_independent(frozenset(), nb)
