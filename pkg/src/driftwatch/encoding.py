"""Event encoding and suspicious-state propagation."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from typing import Dict, List

import numpy as np

from .core import N_RELATIONS, EntityKind, EntityRecord, Event, EventKind, INBOUND_KINDS

LEVEL_WEIGHT = 0.5


def relation_encode(kind: EventKind) -> np.ndarray:
    vec = np.zeros(N_RELATIONS)
    vec[kind.index] = 1.0
    return vec


def hierarchical_tokens(attribute: str, kind: EntityKind) -> List[str]:
    """Split an attribute into coarse-to-fine tokens.

    File paths split on ``/``, socket addresses on ``.``, ``:`` and ``->``;
    process names are a single token.
    """
    if not attribute:
        return []
    if kind is EntityKind.FILE:
        return [t for t in attribute.split("/") if t]
    if kind is EntityKind.SOCKET:
        return [t for t in re.split(r"->|[.:]", attribute) if t]
    return [attribute]


def _signed_bucket(token: str, dim: int) -> tuple:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    return h % dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)


@lru_cache(maxsize=65536)
def _feature_hash_cached(attribute: str, kind: EntityKind, dim: int) -> bytes:
    vec = np.zeros(dim)
    prefix = kind.value
    for level, token in enumerate(hierarchical_tokens(attribute, kind)):
        prefix = f"{prefix}/{token}"
        bucket, sign = _signed_bucket(prefix, dim)
        vec[bucket] += sign * LEVEL_WEIGHT**level
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec.tobytes()


def feature_hash(attribute: str, kind: EntityKind, dim: int = 64) -> np.ndarray:
    """Hierarchical signed feature hash, L2-normalized unless all-zero.

    Every token prefix is hashed into one of ``dim`` buckets with weight
    ``0.5 ** depth``, so attributes sharing a long prefix land close together.
    """
    return np.frombuffer(_feature_hash_cached(attribute, kind, dim)).copy()


def state_init(entity: EntityRecord) -> float:
    entity.ss = 1.0 if entity.kind is EntityKind.SOCKET else 0.0
    return entity.ss


def state_transfer(
    event: Event,
    entities: Dict[str, EntityRecord],
    beta: float = 0.95,
    strict_max: bool = False,
) -> float:
    """Propagate suspicious state along the event's information flow.

    The receiver gets ``beta * max(sender.ss, receiver.ss)``. With
    ``strict_max`` the receiver keeps ``max(receiver.ss, beta * sender.ss)``
    instead, so interaction can never lower it. Returns the receiver's new ss.
    """
    if event.kind is EventKind.PSEUDO:
        raise ValueError("pseudo-edges carry no state")
    sender_id, receiver_id = event.flow
    sender = entities[sender_id]
    receiver = entities[receiver_id]
    if strict_max:
        new = max(receiver.ss, beta * sender.ss)
    else:
        new = beta * max(sender.ss, receiver.ss)
    receiver.ss = min(1.0, max(0.0, new))
    return receiver.ss


def encode_event(
    event: Event,
    entities: Dict[str, EntityRecord],
    hash_dim: int = 64,
) -> np.ndarray:
    """FE(subject) | SE(subject) | FE(object) | SE(object) | RE(kind).

    Uses the entities' current ss, so call it before :func:`state_transfer`.
    """
    s = entities[event.subject_id]
    o = entities[event.object_id]
    return np.concatenate([
        feature_hash(s.attribute, s.kind, hash_dim),
        [s.ss],
        feature_hash(o.attribute, o.kind, hash_dim),
        [o.ss],
        relation_encode(event.kind),
    ])


def receiver_of(event: Event) -> str:
    return event.subject_id if event.kind in INBOUND_KINDS else event.object_id
