"""Four-phase window loop: preprocess, detect, investigate, update."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import encoding
from .config import Config
from .core import N_RELATIONS, EntityRecord, Event, EventKind, WindowGraph
from .ingest import cpr_reduce, partition_windows, whitelist_filter
from .investigation import (
    MiniGraph,
    ScenarioGraph,
    WindowRecord,
    build_mini_tree,
    correlate_and_reconstruct,
    discard_non_malicious_suspicious,
    filter_malicious,
    merge_mini_graph,
    score_paths,
    select_suspicious,
)
from .model import (
    EventInput,
    MemoryRef,
    ReconstructorModel,
    TemporalState,
    TrainingDiverged,
    time_delta_feature,
    train_on_inputs,
)
from .rehearsal import RNPool, ReachabilityIndex, propose_pseudo_edges, update_pool

log = logging.getLogger(__name__)

PHASES = ("preprocess", "detect", "investigate", "update")


@dataclass
class Alert:
    window_index: int
    windows: List[int]
    malicious_nodes: List[str]
    path_count: int
    scenario: ScenarioGraph
    scenario_file: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "window_index": self.window_index,
            "windows": list(self.windows),
            "malicious_nodes": list(self.malicious_nodes),
            "path_count": self.path_count,
            "scenario_file": self.scenario_file,
        }


@dataclass
class WindowReport:
    index: int
    start: int
    end: int
    raw_events: int = 0
    events: int = 0
    rejected: List[Event] = field(default_factory=list)
    sigma: float = float("nan")
    mean_rl: float = float("nan")
    anomalous: List[str] = field(default_factory=list)
    suspicious: List[str] = field(default_factory=list)
    rehearsal: List[str] = field(default_factory=list)
    malicious: List[str] = field(default_factory=list)
    discarded: List[str] = field(default_factory=list)
    pseudo_edges: int = 0
    pool_size: int = 0
    trained: bool = False
    train_error: Optional[str] = None
    alerts: List[Alert] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)

    def stats(self) -> dict:
        return {
            "window_index": self.index,
            "start": self.start,
            "end": self.end,
            "raw_events": self.raw_events,
            "events": self.events,
            "rejected": len(self.rejected),
            "sigma": None if np.isnan(self.sigma) else self.sigma,
            "mean_rl": None if np.isnan(self.mean_rl) else self.mean_rl,
            "anomalous": len(self.anomalous),
            "suspicious": len(self.suspicious),
            "rehearsal": len(self.rehearsal),
            "malicious": len(self.malicious),
            "discarded": len(self.discarded),
            "pseudo_edges": self.pseudo_edges,
            "pool_size": self.pool_size,
            "trained": self.trained,
            "alerts": len(self.alerts),
            "timing": {k: round(v, 6) for k, v in self.timing.items()},
        }


class PipelineState:
    """All mutable state of one detection run."""

    def __init__(self, config: Config):
        self.config = config
        self.entities: Dict[str, EntityRecord] = {}
        self.model = ReconstructorModel(
            config.encoding_dim, config.d_mem, config.d_emb, config.d_time,
            config.d_hidden, config.attention, config.seed,
        )
        self.temporal = TemporalState(config.d_mem, config.k_nb)
        self.rn_pool = RNPool(config.pool_capacity)
        self.mini_graphs: List[MiniGraph] = []
        self.window_history: List[WindowRecord] = []
        self.origin: Optional[int] = None
        self.next_window = 0
        self.next_mg_id = 0
        self.next_seq = 0

    def register_entities(self, catalog: Mapping[str, EntityRecord]) -> None:
        """Adopt unseen entities, initializing their suspicious state."""
        for uid in catalog:
            if uid in self.entities:
                continue
            src = catalog[uid]
            ent = EntityRecord(uid, src.kind, src.attribute)
            encoding.state_init(ent)
            ent.memory = np.zeros(self.config.d_mem)
            self.entities[uid] = ent

    def window_bounds(self, index: int) -> Tuple[int, int]:
        origin = self.origin or 0
        start = origin + index * self.config.window_ns
        return start, start + self.config.window_ns


# ----------------------------------------------------------------- phases

def preprocess(state: PipelineState, events: Sequence[Event]) -> Tuple[List[Event], List[np.ndarray]]:
    cfg = state.config
    events = whitelist_filter(events, cfg.whitelist, state.entities)
    events = cpr_reduce(events)
    encodings = []
    d = cfg.hash_dim
    for ev in events:
        enc = encoding.encode_event(ev, state.entities, d)
        if cfg.use_state_transfer:
            encoding.state_transfer(ev, state.entities, cfg.decay_beta, cfg.strict_max)
        else:
            enc[d] = 0.0
            enc[2 * d + 1] = 0.0
        encodings.append(enc)
    return events, encodings


def _tau(state: PipelineState, node: str, t: int) -> float:
    last = state.entities[node].last_update
    return 0.0 if last is None else time_delta_feature(t - last)


def build_event_input(
    state: PipelineState,
    ev: Event,
    enc: np.ndarray,
    pseudo: Sequence[Event] = (),
) -> EventInput:
    """Snapshot the model inputs for one event.

    Neighbours are the subject's most recent distinct partners, the event's
    own object (with its relation slots masked) and any pseudo partners.
    """
    temporal = state.temporal
    t = ev.timestamp
    refs: List[MemoryRef] = []
    edges: List[np.ndarray] = []
    taus: List[float] = []
    flags: List[float] = []
    for nb, edge in temporal.history(ev.subject_id, exclude=ev.object_id):
        refs.append(temporal.ref(nb))
        edges.append(edge)
        taus.append(_tau(state, nb, t))
        flags.append(0.0)
    masked = enc.copy()
    masked[-N_RELATIONS:] = 0.0
    refs.append(temporal.ref(ev.object_id))
    edges.append(masked)
    taus.append(_tau(state, ev.object_id, t))
    flags.append(1.0)
    for pe in pseudo:
        refs.append(temporal.ref(pe.subject_id))
        edges.append(encoding.encode_event(pe, state.entities, state.config.hash_dim))
        taus.append(_tau(state, pe.subject_id, t))
        flags.append(0.0)
    return EventInput(
        subject=temporal.ref(ev.subject_id),
        subject_tau=_tau(state, ev.subject_id, t),
        neighbors=refs,
        edges=np.stack(edges),
        taus=np.array(taus),
        flags=np.array(flags),
        label=ev.kind.index,
    )


def detect(
    state: PipelineState,
    window: WindowGraph,
    encodings: Sequence[np.ndarray],
) -> Tuple[List[EventInput], int]:
    """Score every event, then update both endpoints' memories."""
    cfg = state.config
    model = state.model
    temporal = state.temporal
    index = None
    if cfg.use_pseudo_edges and len(state.rn_pool):
        index = ReachabilityIndex(window.events, state.rn_pool, cfg.k_hop)
    inputs: List[EventInput] = []
    n_pseudo = 0
    for ev, enc in zip(window.events, encodings):
        pseudo = propose_pseudo_edges(ev, state.rn_pool, index, cfg.p_max) if index else []
        n_pseudo += len(pseudo)
        inp = build_event_input(state, ev, enc, pseudo)
        _, loss, cache = model.forward(inp)
        window.rl[ev] = loss
        inputs.append(inp)

        mems = cache[0]
        target = len(inp.neighbors) - len(pseudo) - 1
        s_i, s_j = mems[0], mems[1 + target]
        t = ev.timestamp
        for node, own, other, tau in (
            (ev.subject_id, s_i, s_j, inp.subject_tau),
            (ev.object_id, s_j, s_i, inp.taus[target]),
        ):
            msg = model.message(own, other, tau, enc)
            new = model.memory_update(msg, own)
            temporal.refs[node] = MemoryRef(own, msg)
            ent = state.entities[node]
            ent.memory = new
            ent.last_update = t
        temporal.remember(ev.subject_id, ev.object_id, enc)
        temporal.remember(ev.object_id, ev.subject_id, enc)
    return inputs, n_pseudo


def identify_anomalous_nodes(window: WindowGraph, sigma_k: float = 2.0) -> Tuple[Set[str], float]:
    """Endpoints of events whose loss strictly exceeds mean + k * std."""
    if not window.events:
        return set(), float("nan")
    sigma = window.threshold(sigma_k)
    out = set()
    for ev in window.events:
        if window.rl[ev] > sigma:
            out.add(ev.subject_id)
            out.add(ev.object_id)
    return out, sigma


def investigate(state: PipelineState, window: WindowGraph, anomalous: Set[str],
                sigma: float, report: WindowReport) -> None:
    cfg = state.config
    ss = {n: state.entities[n].ss for n in anomalous}
    if cfg.use_state_transfer:
        suspicious = select_suspicious(anomalous, ss, cfg.gamma)
    else:
        suspicious = set(anomalous)
    report.suspicious = sorted(suspicious)
    report.rehearsal = sorted(set(anomalous) - suspicious)

    flagged = [(ev, window.rl[ev]) for ev in window.events if window.rl[ev] > sigma]
    record = WindowRecord(window.index, flagged=flagged)
    if state.next_window <= cfg.warmup_windows or not suspicious:
        state.window_history.append(record)
        return

    trees, missing = build_mini_tree(window, suspicious)
    if missing:
        log.debug("window %d: %d suspicious nodes outside the window graph", window.index, len(missing))
    for tree in trees:
        state.mini_graphs = merge_mini_graph(state.mini_graphs, tree, state.next_mg_id)
        if state.mini_graphs[-1].id == state.next_mg_id:
            state.next_mg_id += 1

    names = {n: state.entities[n].name for g in state.mini_graphs for n in g.nodes}
    scored = score_paths(sorted(suspicious), state.mini_graphs, names,
                         cfg.walks, cfg.walk_len, cfg.seed, window.index)
    if cfg.use_path_filter:
        malicious = filter_malicious(scored, cfg.delta)
    else:
        malicious = {sn: scored.get(sn, []) for sn in sorted(suspicious)}
    report.malicious = sorted(malicious)
    report.discarded = sorted(discard_non_malicious_suspicious(suspicious, malicious))

    if malicious:
        record.path_nodes = set(malicious)
        for paths in malicious.values():
            for p in paths:
                record.paths.append(p.edges)
                record.path_nodes.update(p.nodes)
        scenario, windows = correlate_and_reconstruct(record, state.window_history, state.entities)
        report.alerts.append(Alert(
            window_index=window.index,
            windows=windows,
            malicious_nodes=sorted(malicious),
            path_count=sum(len(p) for p in malicious.values()),
            scenario=scenario,
        ))
    state.window_history.append(record)


def update(state: PipelineState, inputs: Sequence[EventInput], report: WindowReport) -> None:
    cfg = state.config
    rehearsal = report.rehearsal if cfg.use_state_transfer else []
    ss = {n: state.entities[n].ss for n in rehearsal}
    _, rehearsal = update_pool(state.rn_pool, rehearsal, ss, cfg.gamma, report.index)
    report.rehearsal = rehearsal
    warm = state.next_window <= cfg.warmup_windows
    if inputs and (rehearsal or warm):
        try:
            train_on_inputs(state.model, inputs, cfg.learning_rate, cfg.epochs, cfg.grad_clip)
            report.trained = True
        except TrainingDiverged as exc:
            log.warning("window %d: training aborted: %s", report.index, exc)
            report.train_error = str(exc)
    report.pool_size = len(state.rn_pool)


# ------------------------------------------------------------------ driver

def advance_window(state: PipelineState, raw_events: Sequence[Event]) -> WindowReport:
    """Run one window through all four phases.

    Entities referenced by ``raw_events`` must already be registered. Events
    outside the window's time range are returned in ``report.rejected``.
    """
    if state.origin is None and raw_events:
        state.origin = min(ev.timestamp for ev in raw_events)
    index = state.next_window
    start, end = state.window_bounds(index)
    report = WindowReport(index, start, end, raw_events=len(raw_events))
    inside = []
    for ev in sorted(raw_events, key=Event.sort_key):
        (inside if start <= ev.timestamp < end else report.rejected).append(ev)
    state.next_window += 1

    clock = time.perf_counter()
    events, encodings = preprocess(state, inside)
    window = WindowGraph(index, start, end, events)
    report.events = len(events)
    now = time.perf_counter()
    report.timing["preprocess"] = now - clock
    clock = now

    inputs, report.pseudo_edges = detect(state, window, encodings)
    anomalous, sigma = identify_anomalous_nodes(window, state.config.sigma_k)
    report.anomalous = sorted(anomalous)
    report.sigma = sigma
    if events:
        report.mean_rl = float(np.mean([window.rl[e] for e in events]))
    now = time.perf_counter()
    report.timing["detect"] = now - clock
    clock = now

    investigate(state, window, anomalous, sigma, report)
    now = time.perf_counter()
    report.timing["investigate"] = now - clock
    clock = now

    update(state, inputs, report)
    report.timing["update"] = time.perf_counter() - clock
    return report


def run_stream(state: PipelineState, events: Sequence[Event],
               catalog: Mapping[str, EntityRecord]) -> List[WindowReport]:
    """Drive every window covered by ``events`` (sorted), including empty ones."""
    state.register_entities(catalog)
    if not events:
        return []
    if state.origin is None:
        state.origin = events[0].timestamp
    buckets = partition_windows(events, state.origin, state.config.window_ns)
    reports = []
    late = [ev for w, evs in buckets.items() if w < state.next_window for ev in evs]
    last = max(buckets)
    for w in range(state.next_window, last + 1):
        batch = buckets.get(w, [])
        if late:
            batch = late + batch
            late = []
        reports.append(advance_window(state, batch))
    return reports
