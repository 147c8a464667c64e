"""Rehearsal-node pool and pseudo-edge proposal."""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .core import Event, EventKind


@dataclass
class RNPool:
    capacity: Optional[int] = None
    # member -> window index at insertion; insertion order preserved
    members: "OrderedDict[str, int]" = field(default_factory=OrderedDict)

    def __contains__(self, node: str) -> bool:
        return node in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def add(self, node: str, window: int) -> bool:
        if node in self.members:
            return False
        self.members[node] = window
        if self.capacity is not None:
            while len(self.members) > self.capacity:
                self.members.popitem(last=False)
        return True

    def rank(self) -> Dict[str, int]:
        """Insertion rank per member; higher is newer."""
        return {n: i for i, n in enumerate(self.members)}


def update_pool(
    pool: RNPool,
    anomalous: Iterable[str],
    ss: Mapping[str, float],
    gamma: float,
    window: int,
) -> Tuple[RNPool, List[str]]:
    """Insert anomalous-but-benign nodes (ss < gamma) into the pool.

    Returns the pool and this window's rehearsal nodes in deterministic order.
    """
    rehearsal = sorted(n for n in set(anomalous) if ss[n] < gamma)
    for n in rehearsal:
        pool.add(n, window)
    return pool, rehearsal


class ReachabilityIndex:
    """Pool members within ``k_hop`` information-flow hops of each node.

    Both orientations count: a member that can reach a node, or that the node
    can reach, qualifies.
    """

    def __init__(self, events: Sequence[Event], pool: RNPool, k_hop: int = 4):
        self.k_hop = k_hop
        self.rank = pool.rank()
        fwd: Dict[str, Set[str]] = {}
        bwd: Dict[str, Set[str]] = {}
        for ev in events:
            if ev.kind is EventKind.PSEUDO:
                continue
            src, dst = ev.flow
            fwd.setdefault(src, set()).add(dst)
            bwd.setdefault(dst, set()).add(src)
        self.reach: Dict[str, Set[str]] = {}
        for member in pool:
            if member not in fwd and member not in bwd:
                continue
            for adj in (fwd, bwd):
                for node in _bfs(member, adj, k_hop):
                    self.reach.setdefault(node, set()).add(member)

    def members_near(self, node: str) -> Set[str]:
        return self.reach.get(node, set())


def _bfs(start: str, adj: Dict[str, Set[str]], limit: int) -> Set[str]:
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        node, d = frontier.popleft()
        if d == limit:
            continue
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    seen.discard(start)
    return seen


def propose_pseudo_edges(
    event: Event,
    pool: RNPool,
    index: ReachabilityIndex,
    p_max: int = 3,
) -> List[Event]:
    """Pseudo-edges from reachable rehearsal nodes to the event's endpoints.

    At most ``p_max`` per endpoint, newest pool members first; a member
    reachable from both endpoints is attached to the subject only. Edges are
    stamped with the event time and are never stored in the window.
    """
    if not len(pool) or p_max <= 0:
        return []
    rank = index.rank
    out: List[Event] = []
    used = {event.subject_id, event.object_id}
    for endpoint in (event.subject_id, event.object_id):
        near = index.members_near(endpoint) - used
        if not near:
            continue
        chosen = sorted(near, key=lambda n: (-rank[n], n))[:p_max]
        used.update(chosen)
        out.extend(
            Event(member, endpoint, EventKind.PSEUDO, event.timestamp, event.seq)
            for member in chosen
        )
    return out
