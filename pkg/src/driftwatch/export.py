"""Scenario serialization: JSON for tooling, Graphviz DOT for analysts."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .investigation import ScenarioGraph

NODE_SHAPES = {"process": "box", "file": "ellipse", "socket": "diamond"}


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def scenario_to_json(scenario: ScenarioGraph) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


def write_scenario_json(scenario: ScenarioGraph, path: os.PathLike) -> None:
    Path(path).write_text(scenario_to_json(scenario), encoding="utf-8")


def read_scenario_json(path: os.PathLike) -> ScenarioGraph:
    return ScenarioGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def scenario_to_dot(scenario: ScenarioGraph, merge_names: bool = False, title: str = "scenario") -> str:
    """Deterministic DOT text; ``merge_names`` collapses same-name nodes."""
    graph = scenario.merged() if merge_names else scenario
    data = graph.to_dict()
    lines = [f"digraph {_quote(title)} {{", "  rankdir=LR;", "  node [fontsize=10];"]
    for node in data["nodes"]:
        label = node["name"]
        if node.get("members", 1) > 1:
            label += f" (x{node['members']})"
        shape = NODE_SHAPES.get(node["kind"].lower(), "ellipse")
        tip = _quote("ss=%.3f" % node["ss"])
        lines.append(f"  {_quote(node['id'])} [label={_quote(label)}, shape={shape}, tooltip={tip}];")
    for e in data["edges"]:
        label = f"{e['kind']} w{e['window']} rl={e['rl']:.2f}"
        lines.append(f"  {_quote(e['src'])} -> {_quote(e['dst'])} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
