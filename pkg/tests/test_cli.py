import json
import os
import subprocess
import sys

import pytest

from driftwatch.cli import main


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "syn")]) == 0
    (root / "cfg.txt").write_text("warmup_windows = 2\n")
    code = main(["detect", "--input", str(root / "syn" / "events.jsonl"),
                 "--config", str(root / "cfg.txt"), "--out", str(root / "run")])
    assert code == 0
    return root


def test_detect_outputs(e2e):
    run = e2e / "run"
    alerts = [json.loads(l) for l in (run / "alerts.jsonl").read_text().splitlines()]
    assert alerts
    for a in alerts:
        assert set(a) == {"window_index", "windows", "malicious_nodes", "path_count", "scenario_file"}
        assert (run / a["scenario_file"]).exists()
        assert (run / a["scenario_file"].replace(".json", ".dot")).exists()
    stats = [json.loads(l) for l in (run / "window_stats.jsonl").read_text().splitlines()]
    assert len(stats) == 20
    assert set(stats[0]["timing"]) == {"preprocess", "detect", "investigate", "update"}
    assert sorted(p.name for p in (run / "figures").iterdir()) == ["loss.png", "nodes.png", "timing.png"]


def test_eval_window_recall(e2e, capsys):
    code = main(["eval", "--alerts", str(e2e / "run" / "alerts.jsonl"),
                 "--labels", str(e2e / "syn" / "labels.jsonl"), "--level", "window", "--json",
                 "--min-recall", "1.0"])
    report = json.loads(capsys.readouterr().out)
    assert code == 0
    assert report["recall"] == 1.0 and report["fn"] == 0


def test_eval_node_level_and_threshold_exit(e2e, capsys):
    args = ["eval", "--alerts", str(e2e / "run" / "alerts.jsonl"),
            "--labels", str(e2e / "syn" / "labels.jsonl"), "--level", "node"]
    assert main(args) == 0
    assert "precision" in capsys.readouterr().out
    assert main(args + ["--min-precision", "1.01"]) == 1


def test_export_dot_merged(e2e, tmp_path, capsys):
    scen = sorted((e2e / "run").glob("scenario_*.json"))[-1]
    assert main(["export-dot", "--scenario", str(scen), "--merge-names"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("digraph")
    assert main(["export-dot", "--scenario", str(scen), "--out", str(tmp_path / "x.dot")]) == 0
    assert (tmp_path / "x.dot").read_text().count("->") >= out.count("->")


def test_resume_matches_single_run(e2e, tmp_path):
    events = (e2e / "syn" / "events.jsonl").read_text().splitlines()
    first = [l for l in events if json.loads(l)["timestamp_ns"] < 1_557_900_000_000_000_000 + 12 * 900 * 10**9]
    (tmp_path / "first.jsonl").write_text("\n".join(first) + "\n")
    (tmp_path / "cfg.txt").write_text("warmup_windows = 2\n")
    ck = tmp_path / "mid.npz"
    assert main(["detect", "--input", str(tmp_path / "first.jsonl"), "--config", str(tmp_path / "cfg.txt"),
                 "--out", str(tmp_path / "a"), "--save-checkpoint", str(ck), "--no-figures"]) == 0
    assert main(["detect", "--input", str(e2e / "syn" / "events.jsonl"), "--resume", str(ck),
                 "--out", str(tmp_path / "b"), "--no-figures"]) == 0
    split = ((tmp_path / "a" / "alerts.jsonl").read_text() + (tmp_path / "b" / "alerts.jsonl").read_text())
    assert split == (e2e / "run" / "alerts.jsonl").read_text()
    for a in json.loads("[" + ",".join(split.splitlines()) + "]"):
        part = "a" if a["window_index"] < 12 else "b"
        assert (tmp_path / part / a["scenario_file"]).read_bytes() == \
            (e2e / "run" / a["scenario_file"]).read_bytes()


def test_checkpoint_commands(e2e, tmp_path, capsys):
    ck = tmp_path / "c.npz"
    assert main(["checkpoint", "save", str(ck), "--input", str(e2e / "syn" / "events.jsonl"),
                 "--set", "warmup_windows=2"]) == 0
    capsys.readouterr()
    assert main(["checkpoint", "load", str(ck)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["windows_processed"] == 20
    assert info["config"]["warmup_windows"] == 2
    assert main(["checkpoint", "load", str(tmp_path / "missing.npz")]) == 2


def test_detect_on_empty_file(tmp_path, capsys):
    (tmp_path / "empty.jsonl").write_text("")
    assert main(["detect", "--input", str(tmp_path / "empty.jsonl"), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "alerts.jsonl").read_text() == ""
    assert "alerts=0" in capsys.readouterr().out


def test_fatal_inputs_exit_2(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text("nope\n{}\n")
    out = str(tmp_path / "o")
    assert main(["detect", "--input", str(tmp_path / "bad.jsonl"), "--out", out]) == 2
    assert main(["detect", "--input", str(tmp_path / "missing.jsonl"), "--out", out]) == 2
    (tmp_path / "c.txt").write_text("beta = 7\n")
    (tmp_path / "ok.jsonl").write_text("")
    assert main(["detect", "--input", str(tmp_path / "ok.jsonl"), "--config", str(tmp_path / "c.txt"),
                 "--out", out]) == 2
    assert main(["detect", "--input", str(tmp_path / "ok.jsonl"), "--set", "nonsense", "--out", out]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["detect", "--bogus"])
    assert exc.value.code == 2


def test_partial_parse_errors_are_written(tmp_path):
    good = json.dumps({"subject_uuid": "p", "object_uuid": "f", "subject_kind": "PROCESS",
                       "object_kind": "FILE", "event_type": "READ", "timestamp_ns": 5,
                       "subject_attr": "cat", "object_attr": "/x"})
    (tmp_path / "in.jsonl").write_text(good + "\n{broken\n")
    assert main(["detect", "--input", str(tmp_path / "in.jsonl"), "--out", str(tmp_path / "o"),
                 "--no-figures"]) == 0
    errors = [json.loads(l) for l in (tmp_path / "o" / "parse_errors.jsonl").read_text().splitlines()]
    assert errors[0]["line"] == 2 and errors[0]["code"] == "BadJson"


def test_cli_output_is_independent_of_hash_seed(tmp_path):
    """Two processes with different string-hash seeds write identical alerts."""
    subprocess.run([sys.executable, "-m", "driftwatch.cli", "synth", "--out", str(tmp_path / "s")],
                   check=True, capture_output=True)
    outputs = []
    for seed in ("1", "2"):
        env = dict(os.environ, PYTHONHASHSEED=seed, DRIFTWATCH_WARMUP_WINDOWS="2")
        out = tmp_path / f"r{seed}"
        subprocess.run([sys.executable, "-m", "driftwatch.cli", "detect", "--input",
                        str(tmp_path / "s" / "events.jsonl"), "--out", str(out), "--no-figures"],
                       check=True, capture_output=True, env=env)
        outputs.append([(p.name, p.read_bytes()) for p in sorted(out.iterdir())
                        if p.name != "window_stats.jsonl"])
    assert outputs[0] == outputs[1]
