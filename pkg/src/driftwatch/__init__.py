"""Streaming provenance-graph intrusion detection with drift-aware replay."""

__version__ = "0.1.0"

from .config import Config, load_config
from .core import EntityKind, EntityRecord, Event, EventKind, WindowGraph
from .pipeline import Alert, PipelineState, WindowReport, advance_window, run_stream

__all__ = [
    "Alert",
    "Config",
    "EntityKind",
    "EntityRecord",
    "Event",
    "EventKind",
    "PipelineState",
    "WindowGraph",
    "WindowReport",
    "advance_window",
    "load_config",
    "run_stream",
]
