import sys

import pytest

from driftwatch.config import Config
from driftwatch.core import EntityKind, EntityRecord, Event, EventKind
from driftwatch.ingest import parse_stream
from driftwatch.pipeline import PipelineState, run_stream
from driftwatch.synth import ScenarioSpec, generate

# Synthetic benchmark settings: two warm-up windows let the model see benign
# traffic before investigation starts.
BENCH = dict(warmup_windows=2)


def entity(uid, kind, attr=None, ss=0.0):
    kind = EntityKind(kind) if isinstance(kind, str) else kind
    return EntityRecord(uid, kind, attr if attr is not None else uid, ss=ss)


def ev(s, o, kind, t=0, seq=None):
    kind = EventKind(kind) if isinstance(kind, str) else kind
    return Event(s, o, kind, t, t if seq is None else seq)


def run_bench(parsed, **overrides):
    state = PipelineState(Config(**{**BENCH, **overrides}))
    reports = run_stream(state, parsed.events, parsed.entities)
    return state, reports


def alerted_windows(reports):
    out = set()
    for r in reports:
        for a in r.alerts:
            out.update(a.windows)
    return out


@pytest.fixture(scope="session")
def synth7():
    return generate(ScenarioSpec())


@pytest.fixture(scope="session")
def parsed7(synth7):
    return parse_stream(synth7.lines)


@pytest.fixture(scope="session")
def bench_full(parsed7):
    return run_bench(parsed7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
