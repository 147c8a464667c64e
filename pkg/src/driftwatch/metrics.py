"""Precision / recall / accuracy / F1 against ground-truth labels."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence

LEVELS = ("window", "graph", "node")


class MetricsError(ValueError):
    pass


@dataclass
class MetricReport:
    level: str
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    accuracy: float
    f1: float
    undefined: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [
            ("level", self.level),
            ("TP/FP/FN/TN", f"{self.tp}/{self.fp}/{self.fn}/{self.tn}"),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("accuracy", f"{self.accuracy:.4f}"),
            ("f1", f"{self.f1:.4f}"),
        ]
        if self.undefined:
            rows.append(("undefined (reported 0)", ",".join(self.undefined)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _ratio(num: int, den: int, name: str, undefined: List[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def score_counts(tp: int, fp: int, fn: int, tn: int = 0, level: str = "window") -> MetricReport:
    undefined: List[str] = []
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    accuracy = _ratio(tp + tn, tp + fp + fn + tn, "accuracy", undefined)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return MetricReport(level, tp, fp, fn, tn, precision, recall, accuracy, f1, undefined)


def score(predictions: Iterable[Hashable], labels: Mapping[Hashable, str], level: str = "window") -> MetricReport:
    """Score predicted-positive units against ``attack``/``benign`` labels.

    Every unit in ``labels`` not predicted counts as a negative prediction.
    """
    if level not in LEVELS:
        raise MetricsError(f"unknown level {level!r}")
    predicted = set(predictions)
    unknown = predicted - set(labels)
    if unknown:
        raise MetricsError(f"predicted units without labels: {sorted(map(str, unknown))}")
    attack = {u for u, lab in labels.items() if lab == "attack"}
    benign = set(labels) - attack
    return score_counts(
        tp=len(predicted & attack),
        fp=len(predicted & benign),
        fn=len(attack - predicted),
        tn=len(benign - predicted),
        level=level,
    )


def predicted_units(alerts: Sequence[dict], level: str, base_dir: Optional[Path] = None) -> set:
    """Units an alert list flags at ``level``.

    window: every window an alert covers (including correlated ones);
    graph: the windows whose own investigation raised an alert;
    node: nodes of the reconstructed scenarios (malicious nodes if the
    scenario file is unavailable).
    """
    out: set = set()
    for a in alerts:
        if level == "window":
            out.update(a.get("windows") or [a["window_index"]])
        elif level == "graph":
            out.add(a["window_index"])
        elif level == "node":
            nodes = None
            sf = a.get("scenario_file")
            if sf:
                path = Path(sf)
                if not path.is_absolute() and base_dir is not None:
                    path = base_dir / path
                if path.exists():
                    data = json.loads(path.read_text(encoding="utf-8"))
                    nodes = [n["id"] for n in data["nodes"]]
            out.update(nodes if nodes is not None else a["malicious_nodes"])
        else:
            raise MetricsError(f"unknown level {level!r}")
    return out
