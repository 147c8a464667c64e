"""Malice investigation: suspicious-node triage, mini-graphs, path scoring
and attack-scenario reconstruction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .core import EntityRecord, Event, EventKind, WindowGraph

EPS = 1e-6
EXACT_MAX_NODES = 8

EdgeKey = Tuple[str, str, int]  # (u, v, window) with u < v


def select_suspicious(anomalous: Iterable[str], ss: Mapping[str, float], gamma: float) -> Set[str]:
    return {n for n in anomalous if ss[n] >= gamma}


# ---------------------------------------------------------------- mini-trees

@dataclass
class TreeEdge:
    src: str
    dst: str
    kind: EventKind
    rl: float
    window: int

    @property
    def key(self) -> EdgeKey:
        u, v = sorted((self.src, self.dst))
        return (u, v, self.window)


@dataclass
class MiniTree:
    window: int
    nodes: Set[str]
    edges: List[TreeEdge]


@dataclass
class MiniGraph:
    id: int
    nodes: Set[str] = field(default_factory=set)
    edges: Dict[EdgeKey, TreeEdge] = field(default_factory=dict)

    def absorb(self, nodes: Iterable[str], edges: Iterable[TreeEdge]) -> None:
        self.nodes.update(nodes)
        for e in edges:
            old = self.edges.get(e.key)
            if old is None or e.rl > old.rl:
                self.edges[e.key] = e


def window_simple_graph(window: WindowGraph) -> nx.Graph:
    """Undirected graph of a window keeping the max-loss event per node pair.

    Each edge carries ``rl``, the originating ``event`` and the transformed
    weight ``w = max_rl - rl + EPS`` used by the Steiner solvers.
    """
    best: Dict[Tuple[str, str], Event] = {}
    for ev in window.events:
        if ev.subject_id == ev.object_id:
            continue
        pair = tuple(sorted((ev.subject_id, ev.object_id)))
        cur = best.get(pair)
        if cur is None or window.rl.get(ev, 0.0) > window.rl.get(cur, 0.0):
            best[pair] = ev
    g = nx.Graph()
    if not best:
        return g
    rl_max = max(window.rl.get(ev, 0.0) for ev in best.values())
    for pair in sorted(best):
        ev = best[pair]
        rl = window.rl.get(ev, 0.0)
        g.add_edge(*pair, rl=rl, event=ev, w=rl_max - rl + EPS)
    return g


def tree_weight(g: nx.Graph, edges: Iterable[Tuple[str, str]]) -> float:
    return sum(g[u][v]["w"] for u, v in edges)


def exact_steiner(g: nx.Graph, terminals: Set[str]) -> nx.Graph:
    """Minimum-weight Steiner tree by enumerating Steiner-node subsets."""
    terminals = set(terminals)
    others = sorted(set(g.nodes) - terminals)
    best, best_w = None, float("inf")
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            sub = g.subgraph(terminals.union(extra))
            if not nx.is_connected(sub):
                continue
            mst = nx.minimum_spanning_tree(sub, weight="w")
            w = mst.size(weight="w")
            if w < best_w - 1e-12:
                best, best_w = mst, w
    return best


def approx_steiner(g: nx.Graph, terminals: Set[str]) -> nx.Graph:
    """Kou et al. shortest-path 2-approximation."""
    return nx.algorithms.approximation.steiner_tree(g, sorted(terminals), weight="w", method="kou")


def build_mini_tree(window: WindowGraph, suspicious: Iterable[str]) -> Tuple[List[MiniTree], Set[str]]:
    """Max-loss Steiner trees spanning the suspicious nodes of one window.

    Returns one tree per connected component that holds terminals, plus the
    terminals absent from the window graph.
    """
    g = window_simple_graph(window)
    sn = set(suspicious)
    present = {n for n in sn if n in g}
    missing = sn - present
    trees: List[MiniTree] = []
    for comp in sorted((c for c in nx.connected_components(g) if c & present), key=min):
        terms = comp & present
        if len(terms) == 1:
            trees.append(MiniTree(window.index, set(terms), []))
            continue
        sub = g.subgraph(comp)
        tree = exact_steiner(sub, terms) if len(comp) <= EXACT_MAX_NODES else approx_steiner(sub, terms)
        edges = []
        for u, v in sorted(tuple(sorted(e)) for e in tree.edges):
            ev = g[u][v]["event"]
            edges.append(TreeEdge(ev.subject_id, ev.object_id, ev.kind, g[u][v]["rl"], window.index))
        trees.append(MiniTree(window.index, set(tree.nodes) | terms, edges))
    return trees, missing


def merge_mini_graph(graphs: List[MiniGraph], tree: MiniTree, next_id: Optional[int] = None) -> List[MiniGraph]:
    """Union ``tree`` into every mini-graph it touches, coalescing them."""
    touching = [g for g in graphs if g.nodes & tree.nodes]
    if not touching:
        gid = next_id if next_id is not None else max((g.id for g in graphs), default=-1) + 1
        new = MiniGraph(gid)
        new.absorb(tree.nodes, tree.edges)
        return graphs + [new]
    target = min(touching, key=lambda g: g.id)
    for g in touching:
        if g is not target:
            target.absorb(g.nodes, g.edges.values())
    target.absorb(tree.nodes, tree.edges)
    return [g for g in graphs if g is target or g not in touching]


# ------------------------------------------------------------- path scoring

@dataclass
class ScoredPath:
    sn: str
    nodes: List[str]
    edges: List[TreeEdge]
    volatility: float = 0.0
    periodicity: float = 0.0
    heterogeneity: float = 0.0
    persistence: float = 0.0
    score: float = 0.0

    @property
    def rl(self) -> List[float]:
        return [e.rl for e in self.edges]

    def raw_features(self) -> Tuple[float, float, float, float]:
        return self.volatility, self.periodicity, self.heterogeneity, self.persistence


def spectral_peak_strength(seq: Sequence[float]) -> float:
    """Share of the strongest non-DC frequency in the non-DC spectrum.

    1.0 means a single pure oscillation. Sequences with no non-DC energy
    (constant, or shorter than two) count as perfectly regular.
    """
    mags = np.abs(np.fft.rfft(np.asarray(seq, dtype=float)))[1:]
    total = mags.sum()
    if mags.size == 0 or total <= 1e-12:
        return 1.0
    return float(mags.max() / total)


def volatility_feature(seq: Sequence[float]) -> float:
    """Population std of the loss sequence; exactly 0 when constant."""
    arr = np.asarray(seq, dtype=float)
    if arr.size == 0 or np.all(arr == arr[0]):
        return 0.0
    return float(np.std(arr))


def periodicity_feature(seq: Sequence[float]) -> float:
    return 1.0 / (spectral_peak_strength(seq) + EPS)


def heterogeneity_feature(names: Sequence[str]) -> float:
    return len(set(names)) / len(names) if names else 0.0


def random_walks(graph: MiniGraph, start: str, walks: int, max_len: int,
                 rng: np.random.Generator) -> List[Tuple[List[str], List[TreeEdge]]]:
    """Undirected walks that never reuse an edge; empty walks are dropped."""
    incident: Dict[str, List[EdgeKey]] = {}
    for key in sorted(graph.edges):
        u, v, _ = key
        incident.setdefault(u, []).append(key)
        incident.setdefault(v, []).append(key)
    out = []
    for _ in range(walks):
        node, used = start, set()
        nodes, edges = [start], []
        while len(edges) < max_len:
            options = [k for k in incident.get(node, ()) if k not in used]
            if not options:
                break
            key = options[int(rng.integers(len(options)))]
            used.add(key)
            edge = graph.edges[key]
            node = key[1] if key[0] == node else key[0]
            nodes.append(node)
            edges.append(edge)
        if edges:
            out.append((nodes, edges))
    return out


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_scores(paths: List[ScoredPath]) -> None:
    """Min-max normalize each feature across ``paths`` and sum into score."""
    if not paths:
        return
    raw = np.array([p.raw_features() for p in paths])
    norm = np.column_stack([_minmax(raw[:, j]) for j in range(4)])
    for p, row in zip(paths, norm):
        p.score = float(row.sum())


def score_paths(
    suspicious: Sequence[str],
    graphs: Sequence[MiniGraph],
    names: Mapping[str, str],
    walks: int = 20,
    max_len: int = 16,
    seed: int = 0,
    window: int = 0,
) -> Dict[str, List[ScoredPath]]:
    """Random-walk paths for each suspicious node, scored jointly.

    Features are normalized across every path generated in this call, i.e.
    across the window's whole path set.
    """
    by_node = {n: g for g in graphs for n in g.nodes}
    result: Dict[str, List[ScoredPath]] = {}
    for idx, sn in enumerate(sorted(suspicious)):
        graph = by_node.get(sn)
        if graph is None:
            continue
        rng = np.random.default_rng([seed, window, idx])
        paths = []
        for nodes, edges in random_walks(graph, sn, walks, max_len, rng):
            rl = [e.rl for e in edges]
            paths.append(ScoredPath(
                sn, nodes, edges,
                volatility=volatility_feature(rl),
                periodicity=periodicity_feature(rl),
                heterogeneity=heterogeneity_feature([names.get(n, n) for n in nodes]),
                persistence=float(len(edges)),
            ))
        if paths:
            result[sn] = paths
    normalize_scores([p for ps in result.values() for p in ps])
    return result


def filter_malicious(scored: Mapping[str, List[ScoredPath]], delta: float = 0.7) -> Dict[str, List[ScoredPath]]:
    out = {}
    for sn in sorted(scored):
        keep = [p for p in scored[sn] if p.score > delta]
        if keep:
            out[sn] = keep
    return out


def discard_non_malicious_suspicious(suspicious: Iterable[str], malicious: Iterable[str]) -> Set[str]:
    """Suspicious nodes that are neither alerted nor pooled this window."""
    return set(suspicious) - set(malicious)


# ------------------------------------------------------------------ scenario

@dataclass
class WindowRecord:
    """What the investigator remembers about a past window."""

    index: int
    path_nodes: Set[str] = field(default_factory=set)
    paths: List[List[TreeEdge]] = field(default_factory=list)
    flagged: List[Tuple[Event, float]] = field(default_factory=list)


@dataclass
class ScenarioGraph:
    nodes: Dict[str, dict] = field(default_factory=dict)
    edges: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "nodes": [dict(id=n, **self.nodes[n]) for n in sorted(self.nodes)],
            "edges": sorted(self.edges, key=_edge_sort_key),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioGraph":
        nodes = {n["id"]: {k: v for k, v in n.items() if k != "id"} for n in data["nodes"]}
        return cls(nodes, [dict(e) for e in data["edges"]])

    def merged(self) -> "ScenarioGraph":
        """Rendering view with same-name nodes collapsed into one."""
        out = ScenarioGraph()
        alias = {}
        for nid in sorted(self.nodes):
            info = self.nodes[nid]
            key = f"{info['kind']}:{info['name']}"
            alias[nid] = key
            cur = out.nodes.get(key)
            if cur is None:
                out.nodes[key] = {"name": info["name"], "kind": info["kind"], "ss": info["ss"], "members": 1}
            else:
                cur["ss"] = max(cur["ss"], info["ss"])
                cur["members"] += 1
        seen: Dict[tuple, dict] = {}
        for e in self.edges:
            k = (alias[e["src"]], alias[e["dst"]], e["kind"])
            cur = seen.get(k)
            if cur is None:
                seen[k] = dict(e, src=k[0], dst=k[1])
            else:
                cur["rl"] = max(cur["rl"], e["rl"])
                cur["window"] = min(cur["window"], e["window"])
        out.edges = list(seen.values())
        return out


def _edge_sort_key(e: dict) -> tuple:
    return (e["window"], e["src"], e["dst"], e["kind"], -e["rl"])


def correlate_windows(current: int, path_nodes: Set[str], history: Sequence[WindowRecord]) -> List[int]:
    """Windows whose stored malicious paths chain back to the current ones."""
    nodes = set(path_nodes)
    hit = [current]
    for rec in sorted(history, key=lambda r: -r.index):
        if rec.index >= current or not rec.path_nodes:
            continue
        if rec.path_nodes & nodes:
            hit.append(rec.index)
            nodes |= rec.path_nodes
    return sorted(hit)


def correlate_and_reconstruct(
    current: WindowRecord,
    history: Sequence[WindowRecord],
    entities: Mapping[str, EntityRecord],
) -> Tuple[ScenarioGraph, List[int]]:
    """Merge malicious paths of correlated windows plus nearby flagged events."""
    windows = set(correlate_windows(current.index, current.path_nodes, history))
    records = [current] + [r for r in history if r.index in windows and r.index != current.index]
    path_nodes: Set[str] = set()
    edge_rows: Dict[tuple, dict] = {}

    def add(src, dst, kind, rl, win):
        k = (src, dst, kind, win)
        cur = edge_rows.get(k)
        if cur is None or rl > cur["rl"]:
            edge_rows[k] = {"src": src, "dst": dst, "kind": kind, "rl": float(rl), "window": int(win)}

    for rec in records:
        path_nodes |= rec.path_nodes
        for path in rec.paths:
            for e in path:
                add(e.src, e.dst, e.kind.value, e.rl, e.window)
    for rec in records:
        for ev, rl in rec.flagged:
            if ev.subject_id in path_nodes or ev.object_id in path_nodes:
                add(ev.subject_id, ev.object_id, ev.kind.value, rl, rec.index)
    scenario = ScenarioGraph()
    for row in edge_rows.values():
        for n in (row["src"], row["dst"]):
            if n not in scenario.nodes:
                ent = entities[n]
                scenario.nodes[n] = {"name": ent.name, "kind": ent.kind.value, "ss": float(ent.ss)}
    scenario.edges = sorted(edge_rows.values(), key=_edge_sort_key)
    return scenario, sorted(windows)
