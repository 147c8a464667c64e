from collections import deque

from hypothesis import given, settings, strategies as st

from driftwatch.core import EventKind
from driftwatch.rehearsal import RNPool, ReachabilityIndex, propose_pseudo_edges, update_pool

from conftest import ev


def test_update_pool_inserts_only_low_suspicion():
    pool = RNPool()
    pool, rn = update_pool(pool, {"a", "b"}, {"a": 0.0, "b": 0.9}, 0.5, window=0)
    assert rn == ["a"]
    assert list(pool) == ["a"]


def test_empty_anomalies_leave_pool():
    pool = RNPool()
    pool.add("x", 0)
    pool, rn = update_pool(pool, set(), {}, 0.5, window=1)
    assert rn == [] and list(pool) == ["x"]


def test_requalifying_member_keeps_size_and_position():
    pool = RNPool()
    update_pool(pool, {"a"}, {"a": 0.1}, 0.5, 0)
    update_pool(pool, {"b"}, {"b": 0.1}, 0.5, 1)
    update_pool(pool, {"a"}, {"a": 0.1}, 0.5, 2)
    assert list(pool.members.items()) == [("a", 0), ("b", 1)]


def test_capacity_evicts_oldest():
    pool = RNPool(capacity=2)
    for i, n in enumerate("abc"):
        pool.add(n, i)
    assert list(pool) == ["b", "c"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0, 1), max_size=6), max_size=8),
       st.floats(0, 1))
def test_pool_grows_monotonically_and_members_were_benign(windows, gamma):
    pool = RNPool()
    size = 0
    for w, ss in enumerate(windows):
        _, rn = update_pool(pool, set(ss), ss, gamma, w)
        assert all(ss[n] < gamma for n in rn)
        assert len(pool) >= size
        size = len(pool)
        assert len(set(pool)) == len(pool)


def test_empty_pool_gives_no_pseudo_edges():
    pool = RNPool()
    index = ReachabilityIndex([ev("p", "f", "READ", 1)], pool)
    assert propose_pseudo_edges(ev("p", "f", "READ", 1), pool, index) == []


def test_two_hop_writer_reaches_reader():
    # r writes f; u reads f: r -> f -> u in information-flow terms
    events = [ev("r", "f", "WRITE", 1), ev("u", "f", "READ", 2)]
    pool = RNPool()
    pool.add("r", 0)
    index = ReachabilityIndex(events, pool, k_hop=4)
    out = propose_pseudo_edges(ev("u", "g", "WRITE", 3), pool, index)
    assert [(e.subject_id, e.object_id, e.kind) for e in out] == [("r", "u", EventKind.PSEUDO)]
    assert out[0].timestamp == 3


def _bfs_reach(events, start, limit):
    adj = {}
    for e in events:
        a, b = e.flow
        adj.setdefault(a, set()).add(b)
    seen, frontier = {start: 0}, deque([start])
    while frontier:
        n = frontier.popleft()
        if seen[n] == limit:
            continue
        for m in adj.get(n, ()):
            if m not in seen:
                seen[m] = seen[n] + 1
                frontier.append(m)
    return set(seen) - {start}


def test_reachability_matches_bfs_both_directions():
    events = [ev("a", "f1", "WRITE", 1), ev("b", "f1", "READ", 2), ev("b", "c", "FORK", 3),
              ev("c", "f2", "WRITE", 4), ev("d", "f2", "READ", 5), ev("d", "k", "SENDTO", 6)]
    pool = RNPool()
    for n in ("a", "k"):
        pool.add(n, 0)
    for k_hop in (1, 2, 3, 6):
        index = ReachabilityIndex(events, pool, k_hop)
        nodes = {n for e in events for n in (e.subject_id, e.object_id)}
        reversed_events = [ev(e.object_id, e.subject_id, e.kind, e.timestamp) for e in events]
        for node in nodes:
            expect = {m for m in pool
                      if node in _bfs_reach(events, m, k_hop) or node in _bfs_reach(reversed_events, m, k_hop)}
            assert index.members_near(node) == expect, (k_hop, node)


def test_cap_and_newest_first():
    current = ev("u", "f", "READ", 20)
    events = [ev(f"r{i}", "f", "WRITE", i) for i in range(10)] + [current]
    pool = RNPool()
    for i in range(10):
        pool.add(f"r{i}", i)
    index = ReachabilityIndex(events, pool, k_hop=2)
    out = propose_pseudo_edges(current, pool, index, p_max=3)
    assert [e.subject_id for e in out if e.object_id == "u"] == ["r9", "r8", "r7"]
    assert [e.subject_id for e in out if e.object_id == "f"] == ["r6", "r5", "r4"]
    assert all(e.kind is EventKind.PSEUDO for e in out)


def test_member_near_both_endpoints_attaches_once():
    events = [ev("r", "f", "WRITE", 1), ev("u", "f", "READ", 2)]
    pool = RNPool()
    pool.add("r", 0)
    index = ReachabilityIndex(events, pool)
    out = propose_pseudo_edges(ev("u", "f", "READ", 3), pool, index)
    assert [(e.subject_id, e.object_id) for e in out] == [("r", "u")]


def test_endpoint_in_pool_is_not_self_paired():
    events = [ev("r", "f", "WRITE", 1)]
    pool = RNPool()
    pool.add("r", 0)
    index = ReachabilityIndex(events, pool)
    assert propose_pseudo_edges(ev("r", "f", "WRITE", 2), pool, index) == []
