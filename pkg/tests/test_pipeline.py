import dataclasses

import numpy as np
import pytest

from driftwatch import pipeline
from driftwatch.config import Config
from driftwatch.core import EventKind
from driftwatch.ingest import parse_stream
from driftwatch.pipeline import PipelineState, advance_window, run_stream
from driftwatch.synth import ScenarioSpec, generate

from conftest import alerted_windows, entity, ev


@pytest.fixture(scope="module")
def benign_window():
    res = generate(ScenarioSpec(windows=1, attack_windows=(), drift_at=None))
    return parse_stream(res.lines)


def params_equal(a, b):
    return all(np.array_equal(a[k], b[k]) for k in a)


def test_empty_window_changes_nothing():
    state = PipelineState(Config())
    before = state.model.copy_params()
    report = advance_window(state, [])
    assert report.anomalous == [] and report.alerts == [] and not report.trained
    assert params_equal(before, state.model.params)
    assert set(report.timing) == set(pipeline.PHASES)


def test_repeated_benign_window_loss_drops(benign_window):
    cfg = Config()
    state = PipelineState(cfg)
    state.register_entities(benign_window.entities)
    base = benign_window.events
    means = []
    for k in range(5):
        shifted = [dataclasses.replace(e, timestamp=e.timestamp + k * cfg.window_ns,
                                       seq=e.seq + k * len(base)) for e in base]
        means.append(advance_window(state, shifted).mean_rl)
    assert means[4] < means[0]


def test_out_of_window_events_are_reported():
    state = PipelineState(Config(window_ns=100))
    state.register_entities({"p": entity("p", "PROCESS"), "f": entity("f", "FILE")})
    late = ev("p", "f", "WRITE", 250)
    report = advance_window(state, [ev("p", "f", "READ", 10), late])
    assert report.rejected == [late]
    assert report.events == 1


def test_no_rehearsal_nodes_means_no_training():
    state = PipelineState(Config())
    state.register_entities({"p": entity("p", "PROCESS"), "f": entity("f", "FILE")})
    before = state.model.copy_params()
    report = advance_window(state, [ev("p", "f", "READ", 1)])  # one event: AN is empty
    assert report.anomalous == [] and not report.trained
    assert params_equal(before, state.model.params)


def test_parameters_only_change_in_update_phase(parsed7, monkeypatch):
    state = PipelineState(Config(warmup_windows=2))
    snapshots = {}
    real_pre, real_update = pipeline.preprocess, pipeline.update

    def pre(st, events):
        snapshots["start"] = st.model.copy_params()
        return real_pre(st, events)

    def upd(st, inputs, report):
        assert params_equal(snapshots["start"], st.model.params)
        return real_update(st, inputs, report)

    monkeypatch.setattr(pipeline, "preprocess", pre)
    monkeypatch.setattr(pipeline, "update", upd)
    cutoff = parsed7.events[0].timestamp + 5 * state.config.window_ns
    reports = run_stream(state, [e for e in parsed7.events if e.timestamp < cutoff], parsed7.entities)
    assert len(reports) == 5 and any(r.trained for r in reports)


def test_bench_run_invariants(bench_full, synth7):
    state, reports = bench_full
    assert all(0.0 <= e.ss <= 1.0 for e in state.entities.values())
    assert {14, 15} <= alerted_windows(reports)
    for r in reports:
        assert set(r.malicious) <= set(r.suspicious) <= set(r.anomalous)
        assert not set(r.suspicious) & set(r.rehearsal)
    assert not set(state.rn_pool) & set(synth7.attack_nodes)


def test_scenario_edges_are_paths_or_flagged(bench_full):
    state, reports = bench_full
    sigma = {r.index: r.sigma for r in reports}
    path_edges = {(e.src, e.dst, e.kind.value, e.window)
                  for rec in state.window_history for p in rec.paths for e in p}
    for r in reports:
        for alert in r.alerts:
            for e in alert.scenario.edges:
                assert e["kind"] != EventKind.PSEUDO.value
                on_path = (e["src"], e["dst"], e["kind"], e["window"]) in path_edges
                assert on_path or e["rl"] > sigma[e["window"]]


def test_warmup_windows_skip_investigation(bench_full):
    _, reports = bench_full
    for r in reports[:2]:
        assert r.trained and r.alerts == [] and r.malicious == []


def test_state_transfer_ablation_zeroes_state_slots(parsed7):
    state = PipelineState(Config(use_state_transfer=False))
    state.register_entities(parsed7.entities)
    events, encs = pipeline.preprocess(state, parsed7.events[:50])
    d = state.config.hash_dim
    assert all(enc[d] == 0.0 and enc[2 * d + 1] == 0.0 for enc in encs)
    assert all(e.ss in (0.0, 1.0) for e in state.entities.values())
