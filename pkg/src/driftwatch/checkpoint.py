"""Save and restore a full :class:`PipelineState`.

A checkpoint is a single ``.npz`` archive. Scalars and structure live in a
JSON header (``header`` entry); vectors live in named arrays. Floats in the
header go through ``repr`` so a load reproduces them exactly, which keeps a
split run bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import json
import os
from collections import OrderedDict
from typing import Dict, List

import numpy as np

from .config import Config
from .core import EntityKind, EntityRecord, Event, EventKind
from .investigation import MiniGraph, TreeEdge, WindowRecord
from .model import MemoryRef
from .pipeline import PipelineState
from .rehearsal import RNPool

SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def _edge_row(e: TreeEdge) -> list:
    return [e.src, e.dst, e.kind.value, float(e.rl), int(e.window)]


def _edge_from(row) -> TreeEdge:
    return TreeEdge(row[0], row[1], EventKind(row[2]), row[3], row[4])


def _event_row(ev: Event) -> list:
    return [ev.subject_id, ev.object_id, ev.kind.value, int(ev.timestamp), int(ev.seq)]


def _event_from(row) -> Event:
    return Event(row[0], row[1], EventKind(row[2]), row[3], row[4])


def save_checkpoint(state: PipelineState, path: os.PathLike) -> None:
    arrays: Dict[str, np.ndarray] = {}
    for name, value in state.model.params.items():
        arrays[f"param/{name}"] = value

    ent_ids = sorted(state.entities)
    entities = []
    for uid in ent_ids:
        ent = state.entities[uid]
        entities.append([uid, ent.kind.value, ent.attribute, float(ent.ss), ent.last_update])
    d_mem = state.config.d_mem
    arrays["memory"] = (np.stack([state.entities[u].memory for u in ent_ids])
                        if ent_ids else np.zeros((0, d_mem)))

    ref_ids = list(state.temporal.refs)
    refs = [state.temporal.refs[n] for n in ref_ids]
    arrays["ref_prev"] = np.stack([r.prev for r in refs]) if refs else np.zeros((0, d_mem))
    has_msg = [r.msg is not None for r in refs]
    d_msg = state.model.d_msg
    arrays["ref_msg"] = (np.stack([r.msg if r.msg is not None else np.zeros(d_msg) for r in refs])
                         if refs else np.zeros((0, d_msg)))

    nb_layout = []
    nb_vectors = []
    for node, hist in state.temporal.neighbors.items():
        nb_layout.append([node, list(hist)])
        nb_vectors.extend(hist.values())
    arrays["nb_edges"] = (np.stack(nb_vectors) if nb_vectors
                          else np.zeros((0, state.config.encoding_dim)))

    header = {
        "schema_version": SCHEMA_VERSION,
        "config": state.config.to_dict(),
        "model": state.model.hyper(),
        "origin": state.origin,
        "next_window": state.next_window,
        "next_mg_id": state.next_mg_id,
        "next_seq": state.next_seq,
        "entities": entities,
        "refs": {"ids": ref_ids, "has_msg": has_msg},
        "neighbors": nb_layout,
        "pool": {"capacity": state.rn_pool.capacity,
                 "members": [[n, w] for n, w in state.rn_pool.members.items()]},
        "mini_graphs": [
            {"id": g.id, "nodes": sorted(g.nodes),
             "edges": [_edge_row(e) for e in g.edges.values()]}
            for g in state.mini_graphs
        ],
        "history": [
            {"index": r.index, "path_nodes": sorted(r.path_nodes),
             "paths": [[_edge_row(e) for e in p] for p in r.paths],
             "flagged": [[_event_row(ev), float(rl)] for ev, rl in r.flagged]}
            for r in state.window_history
        ],
    }
    arrays["header"] = np.array(json.dumps(header))
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_checkpoint(path: os.PathLike) -> PipelineState:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    with archive:
        data = {k: archive[k] for k in archive.files}
    if "header" not in data:
        raise CheckpointError("checkpoint has no header")
    header = json.loads(str(data["header"]))
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"schema version {version} != supported {SCHEMA_VERSION}")

    config = Config.from_dict(header["config"])
    state = PipelineState(config)
    if state.model.hyper() != header["model"]:
        raise CheckpointError("model hyperparameters do not match the stored config")
    params = {k[len("param/"):]: v for k, v in data.items() if k.startswith("param/")}
    try:
        state.model.load_params(params)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None

    memory = data["memory"]
    if len(header["entities"]) != len(memory) or (len(memory) and memory.shape[1] != config.d_mem):
        raise CheckpointError("entity memory array has the wrong shape")
    for row, mem in zip(header["entities"], memory):
        uid, kind, attr, ss, last = row
        state.entities[uid] = EntityRecord(uid, EntityKind(kind), attr, ss=ss,
                                           memory=mem.copy(), last_update=last)

    ids = header["refs"]["ids"]
    prev, msg = data["ref_prev"], data["ref_msg"]
    if len(ids) != len(prev) or len(ids) != len(msg):
        raise CheckpointError("memory reference arrays have the wrong length")
    for node, p, m, has in zip(ids, prev, msg, header["refs"]["has_msg"]):
        state.temporal.refs[node] = MemoryRef(p.copy(), m.copy() if has else None)

    vectors = data["nb_edges"]
    pos = 0
    for node, others in header["neighbors"]:
        hist: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for other in others:
            hist[other] = vectors[pos].copy()
            pos += 1
        state.temporal.neighbors[node] = hist
    if pos != len(vectors):
        raise CheckpointError("neighbour edge array has the wrong length")

    pool = header["pool"]
    state.rn_pool = RNPool(pool["capacity"], OrderedDict((n, w) for n, w in pool["members"]))
    for g in header["mini_graphs"]:
        mg = MiniGraph(g["id"], set(g["nodes"]))
        for row in g["edges"]:
            e = _edge_from(row)
            mg.edges[e.key] = e
        state.mini_graphs.append(mg)
    for r in header["history"]:
        state.window_history.append(WindowRecord(
            r["index"], set(r["path_nodes"]),
            [[_edge_from(row) for row in p] for p in r["paths"]],
            [(_event_from(ev), rl) for ev, rl in r["flagged"]],
        ))
    state.origin = header["origin"]
    state.next_window = header["next_window"]
    state.next_mg_id = header["next_mg_id"]
    state.next_seq = header["next_seq"]
    return state
