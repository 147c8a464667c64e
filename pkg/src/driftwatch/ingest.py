"""Event-log parsing, windowing and redundancy filtering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import (
    OBJECT_KIND_FOR,
    EntityKind,
    EntityRecord,
    Event,
    EventKind,
    LOG_EVENT_KINDS,
)

REQUIRED_KEYS = (
    "subject_uuid",
    "object_uuid",
    "subject_kind",
    "object_kind",
    "event_type",
    "timestamp_ns",
    "subject_attr",
    "object_attr",
)

_LOG_KINDS = {k.value: k for k in LOG_EVENT_KINDS}
_ENTITY_KINDS = {k.value: k for k in EntityKind}

# Only read-only initialization traffic against trusted libraries is redundant.
WHITELIST_KINDS = frozenset({EventKind.READ, EventKind.MMAP, EventKind.EXEC})


class ErrorCode(Enum):
    BAD_JSON = "BadJson"
    MISSING_KEY = "MissingKey"
    UNKNOWN_EVENT_TYPE = "UnknownEventType"
    UNKNOWN_ENTITY_KIND = "UnknownEntityKind"
    BAD_TIMESTAMP = "BadTimestamp"
    KIND_MISMATCH = "KindMismatch"
    ENTITY_CONFLICT = "EntityConflict"


@dataclass(frozen=True)
class ParseError:
    line: int
    code: ErrorCode
    detail: str = ""

    def to_dict(self) -> dict:
        return {"line": self.line, "code": self.code.value, "detail": self.detail}


@dataclass
class ParseResult:
    events: List[Event] = field(default_factory=list)
    errors: List[ParseError] = field(default_factory=list)
    entities: Dict[str, EntityRecord] = field(default_factory=dict)


def _parse_line(obj: dict, lineno: int) -> Tuple[Optional[tuple], Optional[ParseError]]:
    if not isinstance(obj, dict):
        return None, ParseError(lineno, ErrorCode.BAD_JSON, "not an object")
    missing = [k for k in REQUIRED_KEYS if k not in obj]
    if missing:
        return None, ParseError(lineno, ErrorCode.MISSING_KEY, ",".join(missing))
    kind = _LOG_KINDS.get(obj["event_type"])
    if kind is None:
        return None, ParseError(lineno, ErrorCode.UNKNOWN_EVENT_TYPE, str(obj["event_type"]))
    skind = _ENTITY_KINDS.get(obj["subject_kind"])
    okind = _ENTITY_KINDS.get(obj["object_kind"])
    if skind is None or okind is None:
        bad = obj["subject_kind"] if skind is None else obj["object_kind"]
        return None, ParseError(lineno, ErrorCode.UNKNOWN_ENTITY_KIND, str(bad))
    ts = obj["timestamp_ns"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        return None, ParseError(lineno, ErrorCode.BAD_TIMESTAMP, repr(ts))
    if skind is not EntityKind.PROCESS or okind is not OBJECT_KIND_FOR[kind]:
        return None, ParseError(
            lineno, ErrorCode.KIND_MISMATCH, f"{skind.value}-{kind.value}->{okind.value}"
        )
    subject = (str(obj["subject_uuid"]), skind, str(obj["subject_attr"]))
    obj_ = (str(obj["object_uuid"]), okind, str(obj["object_attr"]))
    return (subject, obj_, kind, ts), None


def parse_stream(lines: Iterable[str], start_seq: int = 0) -> ParseResult:
    """Parse JSONL audit records.

    Malformed lines become :class:`ParseError` entries with 1-based line
    numbers; parsing always continues. Events come back sorted by
    ``(timestamp, input order)``.
    """
    result = ParseResult()
    seq = start_seq
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            result.errors.append(ParseError(lineno, ErrorCode.BAD_JSON, str(exc)))
            continue
        parsed, err = _parse_line(obj, lineno)
        if err is not None:
            result.errors.append(err)
            continue
        subject, obj_, kind, ts = parsed
        conflict = None
        for uid, ekind, attr in (subject, obj_):
            known = result.entities.get(uid)
            if known is None:
                result.entities[uid] = EntityRecord(uid, ekind, attr)
            elif known.kind is not ekind:
                conflict = uid
        if conflict is not None:
            result.errors.append(ParseError(lineno, ErrorCode.ENTITY_CONFLICT, conflict))
            continue
        result.events.append(Event(subject[0], obj_[0], kind, ts, seq))
        seq += 1
    result.events.sort(key=Event.sort_key)
    return result


def whitelist_filter(
    events: Sequence[Event],
    whitelist: Iterable[str],
    entities: Dict[str, EntityRecord],
) -> List[Event]:
    """Drop read-only library traffic (READ/MMAP/EXEC on whitelisted paths)."""
    wl = tuple(w for w in whitelist if w)
    if not wl:
        return list(events)
    out = []
    for ev in events:
        if ev.kind in WHITELIST_KINDS and matches_whitelist(entities[ev.object_id].attribute, wl):
            continue
        out.append(ev)
    return out


def matches_whitelist(attribute: str, whitelist: Sequence[str]) -> bool:
    base = attribute.rsplit("/", 1)[-1]
    return any(attribute.endswith(w) or base.startswith(w) for w in whitelist)


def cpr_reduce(events: Sequence[Event]) -> List[Event]:
    """Causality-preserving reduction.

    A repeat of ``(subject, object, kind)`` is folded into the earlier kept
    event unless, in between, some kept event carried information into the
    flow source or out of the flow sink. Time-respecting reachability between
    every entity pair is preserved, and the reduction is idempotent.
    """
    out: List[Event] = []
    # flow-source / flow-sink -> open triples touching it
    open_by_src: Dict[str, set] = {}
    open_by_dst: Dict[str, set] = {}
    open_triples: Dict[tuple, tuple] = {}

    def close(triple: tuple) -> None:
        src, dst = open_triples.pop(triple)
        open_by_src[src].discard(triple)
        open_by_dst[dst].discard(triple)

    for ev in events:
        triple = (ev.subject_id, ev.object_id, ev.kind)
        if triple in open_triples:
            continue
        src, dst = ev.flow
        # info now enters `dst`: repeats whose source is `dst` would carry it
        for t in list(open_by_src.get(dst, ())):
            close(t)
        # info now leaves `src`: repeats into `src` could have fed it
        for t in list(open_by_dst.get(src, ())):
            close(t)
        out.append(ev)
        open_triples[triple] = (src, dst)
        open_by_src.setdefault(src, set()).add(triple)
        open_by_dst.setdefault(dst, set()).add(triple)
    return out


def window_index(timestamp: int, origin: int, window_ns: int) -> int:
    return (timestamp - origin) // window_ns


def partition_windows(
    events: Sequence[Event], origin: int, window_ns: int
) -> Dict[int, List[Event]]:
    """Group sorted events by window ordinal, aligned to ``origin``."""
    buckets: Dict[int, List[Event]] = {}
    for ev in events:
        buckets.setdefault(window_index(ev.timestamp, origin, window_ns), []).append(ev)
    return buckets


def read_labels(lines: Iterable[str]) -> Tuple[Dict[int, str], Dict[str, str]]:
    """Parse a ground-truth JSONL file into (window labels, node labels)."""
    windows: Dict[int, str] = {}
    nodes: Dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        label = rec.get("label")
        if label not in ("attack", "benign"):
            raise ValueError(f"line {lineno}: label must be 'attack' or 'benign'")
        if "window_index" in rec:
            windows[int(rec["window_index"])] = label
        elif "node_uuid" in rec:
            nodes[str(rec["node_uuid"])] = label
        else:
            raise ValueError(f"line {lineno}: need window_index or node_uuid")
    return windows, nodes
