import math

import numpy as np
from hypothesis import given, strategies as st

from driftwatch.core import (
    N_RELATIONS,
    OBJECT_KIND_FOR,
    EntityKind,
    EntityRecord,
    Event,
    EventKind,
    LOG_EVENT_KINDS,
    WindowGraph,
)


def test_entity_kinds_are_exactly_three():
    assert {k.value for k in EntityKind} == {"PROCESS", "FILE", "SOCKET"}


def test_event_kinds_and_relation_indices():
    assert N_RELATIONS == 9
    assert EventKind.READ.index == 2
    assert EventKind.PSEUDO.index == 8
    assert EventKind.PSEUDO not in LOG_EVENT_KINDS
    assert set(OBJECT_KIND_FOR) == set(LOG_EVENT_KINDS)


def test_flow_direction_follows_transfer_table():
    for kind in (EventKind.READ, EventKind.MMAP, EventKind.EXEC, EventKind.RECVFROM):
        assert Event("s", "o", kind, 0).flow == ("o", "s")
    for kind in (EventKind.WRITE, EventKind.FORK, EventKind.CLONE, EventKind.SENDTO):
        assert Event("s", "o", kind, 0).flow == ("s", "o")


def test_sort_key_breaks_ties_by_sequence():
    a = Event("p", "f", EventKind.READ, 5, seq=2)
    b = Event("p", "f", EventKind.WRITE, 5, seq=1)
    assert sorted([a, b], key=Event.sort_key) == [b, a]


def test_entity_names():
    assert EntityRecord("1", EntityKind.PROCESS, "/usr/bin/firefox").name == "firefox"
    assert EntityRecord("2", EntityKind.PROCESS, "bash").name == "bash"
    assert EntityRecord("3", EntityKind.FILE, "/etc/passwd").name == "/etc/passwd"
    assert EntityRecord("4", EntityKind.SOCKET, "10.0.0.1:80").name == "10.0.0.1:80"


def _window(losses):
    events = [Event(f"p{i}", f"f{i}", EventKind.READ, i, i) for i in range(len(losses))]
    w = WindowGraph(0, 0, 10, events)
    w.rl = dict(zip(events, losses))
    return w


@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=40))
def test_threshold_matches_reference_formula(losses):
    ref = np.mean(losses) + 2 * math.sqrt(np.mean((np.array(losses) - np.mean(losses)) ** 2))
    assert abs(_window(losses).threshold(2.0) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_empty_window_threshold_is_infinite():
    assert WindowGraph(0, 0, 10).threshold() == float("inf")


def test_window_adjacency_and_nodes():
    w = WindowGraph(0, 0, 10, [Event("p", "f", EventKind.WRITE, 1), Event("p", "q", EventKind.FORK, 2)])
    assert w.nodes() == {"p", "f", "q"}
    assert w.adjacency()["p"] == {"f", "q"}
