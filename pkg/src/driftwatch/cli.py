"""Command line entry point: ``driftwatch <command> ...``.

Exit codes: 0 success, 1 evaluation below threshold, 2 fatal error (bad
flags, unreadable input, invalid config, checkpoint mismatch).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import Config, ConfigError, load_config
from .export import read_scenario_json, scenario_to_dot, write_scenario_json
from .ingest import parse_stream, read_labels
from .metrics import LEVELS, MetricsError, predicted_units, score
from .pipeline import PipelineState, run_stream
from .report import render_figures
from .synth import ScenarioSpec, SpecError, generate

log = logging.getLogger("driftwatch")


class Fatal(Exception):
    """Abort the command with exit code 2."""


def _read_lines(path: str) -> List[str]:
    try:
        if path == "-":
            return sys.stdin.read().splitlines()
        return Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise Fatal(f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise Fatal(f"cannot read {path}: {exc}") from None


def _overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise Fatal(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value
    return out


def _config(args) -> Config:
    if args.config and not Path(args.config).exists():
        raise Fatal(f"no such file: {args.config}")
    try:
        return load_config(args.config, _overrides(args.set))
    except ConfigError as exc:
        raise Fatal(f"invalid config: {exc}") from None


def _parse_input(path: str):
    lines = _read_lines(path)
    result = parse_stream(lines)
    nonblank = sum(1 for l in lines if l.strip())
    if nonblank and not result.events:
        raise Fatal(f"{path}: none of {nonblank} lines parsed; first error: {result.errors[0].to_dict()}")
    if result.errors:
        log.warning("%d malformed lines skipped", len(result.errors))
    return result


def _run(state: PipelineState, path: str):
    parsed = _parse_input(path)
    events = parsed.events
    if state.next_window > 0 and state.origin is not None:
        start, _ = state.window_bounds(state.next_window)
        skipped = sum(1 for ev in events if ev.timestamp < start)
        if skipped:
            log.info("resume: skipping %d events from windows already processed", skipped)
        events = [ev for ev in events if ev.timestamp >= start]
    reports = run_stream(state, events, parsed.entities)
    return parsed, reports


# ------------------------------------------------------------------ commands

def cmd_detect(args) -> int:
    if args.resume:
        try:
            state = load_checkpoint(args.resume)
        except (CheckpointError, FileNotFoundError) as exc:
            raise Fatal(f"checkpoint: {exc}") from None
        if args.config or args.set:
            log.warning("resuming: configuration comes from the checkpoint; --config/--set ignored")
    else:
        state = PipelineState(_config(args))
    parsed, reports = _run(state, args.input)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alert_rows = []
    alerted = set()
    for rep in reports:
        for alert in rep.alerts:
            stem = f"scenario_w{alert.window_index:04d}"
            write_scenario_json(alert.scenario, out / f"{stem}.json")
            (out / f"{stem}.dot").write_text(
                scenario_to_dot(alert.scenario, merge_names=True, title=stem), encoding="utf-8")
            alert.scenario_file = f"{stem}.json"
            alert_rows.append(json.dumps(alert.to_dict(), sort_keys=True))
            alerted.update(alert.windows)
    (out / "alerts.jsonl").write_text("".join(r + "\n" for r in alert_rows), encoding="utf-8")
    stats = [rep.stats() for rep in reports]
    (out / "window_stats.jsonl").write_text(
        "".join(json.dumps(s, sort_keys=True) + "\n" for s in stats), encoding="utf-8")
    if parsed.errors:
        (out / "parse_errors.jsonl").write_text(
            "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in parsed.errors), encoding="utf-8")
    if not args.no_figures:
        render_figures(stats, out / "figures", sorted(alerted))
    if args.save_checkpoint:
        save_checkpoint(state, args.save_checkpoint)

    print(f"windows={len(reports)} events={len(parsed.events)} parse_errors={len(parsed.errors)} "
          f"alerts={len(alert_rows)} alerted_windows={sorted(alerted)}")
    for s in stats:
        t = s["timing"]
        print(f"window {s['window_index']:>4}  events {s['events']:>6}  AN {s['anomalous']:>4}  "
              f"SN {s['suspicious']:>4}  RN {s['rehearsal']:>4}  MN {s['malicious']:>4}  "
              + "  ".join(f"{k} {t.get(k, 0.0):.3f}s" for k in ("preprocess", "detect", "investigate", "update")))
    return 0


def cmd_synth(args) -> int:
    try:
        if args.spec:
            spec = ScenarioSpec.from_text("\n".join(_read_lines(args.spec)))
        else:
            spec = ScenarioSpec()
        if args.seed is not None:
            spec = ScenarioSpec(**{**spec.__dict__, "seed": args.seed})
        result = generate(spec)
    except (SpecError, ConfigError, ValueError) as exc:
        raise Fatal(f"invalid spec: {exc}") from None
    paths = result.write(Path(args.out))
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    print(json.dumps(result.counts, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    alerts_path = Path(args.alerts)
    alerts = [json.loads(l) for l in _read_lines(args.alerts) if l.strip()]
    try:
        windows, nodes = read_labels(_read_lines(args.labels))
    except ValueError as exc:
        raise Fatal(f"bad label file: {exc}") from None
    labels = nodes if args.level == "node" else windows
    try:
        predicted = predicted_units(alerts, args.level, alerts_path.parent)
        report = score(predicted, labels, args.level)
    except MetricsError as exc:
        raise Fatal(str(exc)) from None
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(report.table())
    failed = []
    if args.min_recall is not None and report.recall < args.min_recall:
        failed.append(f"recall {report.recall:.4f} < {args.min_recall}")
    if args.min_precision is not None and report.precision < args.min_precision:
        failed.append(f"precision {report.precision:.4f} < {args.min_precision}")
    if args.min_f1 is not None and report.f1 < args.min_f1:
        failed.append(f"f1 {report.f1:.4f} < {args.min_f1}")
    for msg in failed:
        print(f"below threshold: {msg}", file=sys.stderr)
    return 1 if failed else 0


def cmd_checkpoint(args) -> int:
    if args.action == "save":
        if not args.input:
            raise Fatal("checkpoint save needs --input")
        state = PipelineState(_config(args))
        _run(state, args.input)
        save_checkpoint(state, args.path)
        print(f"saved {args.path} after {state.next_window} windows")
        return 0
    if not Path(args.path).exists():
        raise Fatal(f"no such file: {args.path}")
    try:
        state = load_checkpoint(args.path)
    except CheckpointError as exc:
        raise Fatal(f"checkpoint: {exc}") from None
    print(json.dumps({
        "windows_processed": state.next_window,
        "entities": len(state.entities),
        "rn_pool": len(state.rn_pool),
        "mini_graphs": len(state.mini_graphs),
        "config": state.config.to_dict(),
    }, sort_keys=True))
    return 0


def cmd_export_dot(args) -> int:
    if not Path(args.scenario).exists():
        raise Fatal(f"no such file: {args.scenario}")
    try:
        scenario = read_scenario_json(args.scenario)
    except (ValueError, KeyError) as exc:
        raise Fatal(f"bad scenario file: {exc}") from None
    dot = scenario_to_dot(scenario, merge_names=args.merge_names, title=Path(args.scenario).stem)
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return 0


# -------------------------------------------------------------------- parser

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftwatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run detection over an event stream")
    p.add_argument("--input", required=True, help="JSONL event file, or - for stdin")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.add_argument("--resume", metavar="CKPT", help="continue from a saved checkpoint")
    p.add_argument("--save-checkpoint", metavar="CKPT", help="save state after the run")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate a synthetic stream with labels")
    p.add_argument("--spec", help="key = value scenario spec (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score alerts against labels")
    p.add_argument("--alerts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--level", choices=LEVELS, default="window")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.add_argument("--min-recall", type=float)
    p.add_argument("--min-precision", type=float)
    p.add_argument("--min-f1", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("checkpoint", help="save or inspect pipeline state")
    p.add_argument("action", choices=("save", "load"))
    p.add_argument("path")
    p.add_argument("--input", help="stream to process before saving")
    _add_config_flags(p)
    p.set_defaults(func=cmd_checkpoint)

    p = sub.add_parser("export-dot", help="render a scenario JSON file as DOT")
    p.add_argument("--scenario", required=True)
    p.add_argument("--merge-names", action="store_true", help="collapse same-name nodes")
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.set_defaults(func=cmd_export_dot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Fatal as exc:
        print(f"driftwatch: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
