"""Shared data model: entities, events, windows and per-run pipeline state."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np


class EntityKind(Enum):
    PROCESS = "PROCESS"
    FILE = "FILE"
    SOCKET = "SOCKET"


class EventKind(Enum):
    """Event types. Declaration order fixes the relation one-hot index."""

    FORK = "FORK"
    CLONE = "CLONE"
    READ = "READ"
    WRITE = "WRITE"
    MMAP = "MMAP"
    EXEC = "EXEC"
    SENDTO = "SENDTO"
    RECVFROM = "RECVFROM"
    PSEUDO = "PSEUDO"

    @property
    def index(self) -> int:
        return _KIND_INDEX[self]


_KIND_INDEX = {k: i for i, k in enumerate(EventKind)}
N_RELATIONS = len(EventKind)

# Input logs may only carry these; PSEUDO is synthesized internally.
LOG_EVENT_KINDS = tuple(k for k in EventKind if k is not EventKind.PSEUDO)

# Object kind each event type acts on.
OBJECT_KIND_FOR = {
    EventKind.FORK: EntityKind.PROCESS,
    EventKind.CLONE: EntityKind.PROCESS,
    EventKind.READ: EntityKind.FILE,
    EventKind.WRITE: EntityKind.FILE,
    EventKind.MMAP: EntityKind.FILE,
    EventKind.EXEC: EntityKind.FILE,
    EventKind.SENDTO: EntityKind.SOCKET,
    EventKind.RECVFROM: EntityKind.SOCKET,
}

# Kinds whose information flows object -> subject; everything else flows
# subject -> object.
INBOUND_KINDS = frozenset(
    {EventKind.RECVFROM, EventKind.READ, EventKind.MMAP, EventKind.EXEC}
)


@dataclass(frozen=True)
class Event:
    subject_id: str
    object_id: str
    kind: EventKind
    timestamp: int
    seq: int = 0

    @property
    def flow(self) -> tuple:
        """(source, sink) of the information flow this event carries."""
        if self.kind in INBOUND_KINDS:
            return self.object_id, self.subject_id
        return self.subject_id, self.object_id

    def sort_key(self) -> tuple:
        return (self.timestamp, self.seq)


@dataclass
class EntityRecord:
    id: str
    kind: EntityKind
    attribute: str
    ss: float = 0.0
    memory: Optional[np.ndarray] = None
    last_update: Optional[int] = None

    @property
    def name(self) -> str:
        """Display name used for heterogeneity and same-name merging."""
        if self.kind is EntityKind.PROCESS:
            return self.attribute.rsplit("/", 1)[-1]
        return self.attribute


@dataclass
class WindowGraph:
    index: int
    start: int
    end: int
    events: List[Event] = field(default_factory=list)
    rl: Dict[Event, float] = field(default_factory=dict)

    def adjacency(self) -> Dict[str, set]:
        adj: Dict[str, set] = {}
        for ev in self.events:
            adj.setdefault(ev.subject_id, set()).add(ev.object_id)
            adj.setdefault(ev.object_id, set()).add(ev.subject_id)
        return adj

    def nodes(self) -> set:
        out = set()
        for ev in self.events:
            out.add(ev.subject_id)
            out.add(ev.object_id)
        return out

    def threshold(self, k: float = 2.0) -> float:
        """mean + k * population std of this window's losses."""
        if not self.rl:
            return float("inf")
        vals = np.fromiter((self.rl[e] for e in self.events), dtype=float)
        return float(vals.mean() + k * vals.std())
