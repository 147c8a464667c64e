"""Seeded synthetic provenance streams with drift and an injected attack.

Three benign motifs (web browser, mail client, build job) repeat with small
jitter in every window. At the drift window their parameters swap: new
process names, file trees and remote addresses. The attack compromises a
browser content process through a malicious site, drops and runs a loader,
escalates, injects into an ``sshd`` clone and exfiltrates, spread over the
configured attack windows.
"""

from __future__ import annotations

import json
import random
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import MINUTE_NS, ConfigError, parse_kv_text

DEFAULT_START_NS = 1_557_900_000 * 10**9


class SpecError(ConfigError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 7
    windows: int = 20
    drift_at: Optional[int] = 10
    attack_windows: Tuple[int, ...] = (14, 15)
    window_ns: int = 15 * MINUTE_NS
    start_ns: int = DEFAULT_START_NS
    browser_sessions: int = 14
    mail_sessions: int = 4
    build_jobs: int = 3

    def __post_init__(self) -> None:
        if self.windows <= 0:
            raise SpecError("windows must be positive")
        for w in self.attack_windows:
            if not 0 <= w < self.windows:
                raise SpecError(f"attack window {w} outside 0..{self.windows - 1}")
        if self.drift_at is not None and not 0 <= self.drift_at < self.windows:
            raise SpecError(f"drift window {self.drift_at} outside 0..{self.windows - 1}")

    @classmethod
    def from_text(cls, text: str) -> "ScenarioSpec":
        raw = parse_kv_text(text)
        kw = {}
        for key, value in raw.items():
            if key in ("seed", "windows", "start_ns", "browser_sessions", "mail_sessions", "build_jobs"):
                kw[key] = int(value)
            elif key == "drift_at":
                kw[key] = None if value.lower() in ("", "none") else int(value)
            elif key == "attack_windows":
                kw[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key == "window_minutes":
                kw["window_ns"] = int(float(value) * MINUTE_NS)
            elif key == "window_ns":
                kw[key] = int(value)
            else:
                raise SpecError(f"unknown spec key: {key}")
        return cls(**kw)


@dataclass
class Regime:
    browser: str
    cache_dir: str
    profile: str
    sites: Sequence[str]
    compiler: str
    project: str
    sources: Sequence[str]
    mail_server: str


BEFORE = Regime(
    browser="firefox",
    cache_dir="/home/alice/.mozilla/firefox/cache2/entries",
    profile="/home/alice/.mozilla/firefox/prefs.js",
    sites=("93.184.216.34:443", "151.101.1.69:443", "140.82.112.3:443"),
    compiler="gcc",
    project="/home/alice/proj/alpha",
    sources=("main.c", "util.c", "net.c"),
    mail_server="10.0.0.25:993",
)
AFTER = Regime(
    browser="chromium",
    cache_dir="/home/alice/.cache/chromium/Default/Cache",
    profile="/home/alice/.config/chromium/Default/Preferences",
    sites=("172.217.4.46:443", "104.16.132.229:443", "13.107.42.14:443"),
    compiler="clang",
    project="/srv/build/beta",
    sources=("core.c", "io.c", "parse.c"),
    mail_server="10.0.0.25:993",
)

C2_ADDR = "203.0.113.66:8080"
EXFIL_ADDR = "198.51.100.23:443"


@dataclass
class SynthResult:
    lines: List[str]
    labels: List[str]
    counts: Dict[str, object]
    attack_nodes: List[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": out_dir / "events.jsonl",
            "labels": out_dir / "labels.jsonl",
            "manifest": out_dir / "manifest.json",
        }
        paths["events"].write_text("".join(l + "\n" for l in self.lines), encoding="utf-8")
        paths["labels"].write_text("".join(l + "\n" for l in self.labels), encoding="utf-8")
        paths["manifest"].write_text(json.dumps(self.counts, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


class _Emitter:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.records: List[Tuple[int, int, dict, bool]] = []
        self.entities: Dict[str, Tuple[str, str]] = {}
        self.attack_nodes: set = set()
        self.seq = 0

    def new_id(self) -> str:
        return str(uuid.UUID(int=self.rng.getrandbits(128), version=4))

    def entity(self, kind: str, attr: str, uid: Optional[str] = None) -> str:
        uid = uid or self.new_id()
        self.entities[uid] = (kind, attr)
        return uid

    def emit(self, subj: str, obj: str, etype: str, ts: int, attack: bool = False) -> None:
        sk, sa = self.entities[subj]
        ok, oa = self.entities[obj]
        rec = {
            "subject_uuid": subj,
            "object_uuid": obj,
            "subject_kind": sk,
            "object_kind": ok,
            "event_type": etype,
            "timestamp_ns": ts,
            "subject_attr": sa,
            "object_attr": oa,
        }
        self.records.append((ts, self.seq, rec, attack))
        self.seq += 1
        if attack:
            self.attack_nodes.update((subj, obj))


class _Clock:
    """Monotone timestamps inside a session, clamped to the window."""

    def __init__(self, rng: random.Random, start: int, end: int, t0: Optional[int] = None):
        self.rng = rng
        self.end = end - 1
        self.t = t0 if t0 is not None else start + int(rng.random() * (end - start) * 0.8)

    def tick(self, lo_ms: float = 1.0, hi_ms: float = 400.0) -> int:
        self.t = min(self.end, self.t + int(self.rng.uniform(lo_ms, hi_ms) * 1e6))
        return self.t


def _browser_session(em: _Emitter, reg: Regime, main: str, clock: _Clock, files: dict) -> None:
    rng = em.rng
    child = em.entity("PROCESS", reg.browser)
    em.emit(main, child, "CLONE", clock.tick())
    site = rng.choice(reg.sites)
    sock = em.entity("SOCKET", site)
    em.emit(child, files["libc"], "MMAP", clock.tick())
    em.emit(child, files["libc"], "READ", clock.tick())
    em.emit(child, files["profile"], "READ", clock.tick())
    em.emit(child, sock, "SENDTO", clock.tick())
    for _ in range(rng.randint(2, 25)):
        em.emit(child, sock, "RECVFROM", clock.tick(0.1, 3.0))
    cache = files["cache"][rng.randrange(len(files["cache"]))]
    em.emit(child, cache, "WRITE", clock.tick())
    if rng.random() < 0.5:
        em.emit(child, cache, "READ", clock.tick())
    if rng.random() < 0.3:
        em.emit(child, sock, "SENDTO", clock.tick())
        em.emit(child, sock, "RECVFROM", clock.tick())


def _mail_session(em: _Emitter, reg: Regime, proc: str, clock: _Clock, files: dict) -> None:
    rng = em.rng
    sock = em.entity("SOCKET", reg.mail_server)
    em.emit(proc, sock, "SENDTO", clock.tick())
    for _ in range(rng.randint(1, 8)):
        em.emit(proc, sock, "RECVFROM", clock.tick(0.1, 3.0))
    em.emit(proc, files["inbox"], "WRITE", clock.tick())
    em.emit(proc, files["inbox"], "READ", clock.tick())


def _build_job(em: _Emitter, reg: Regime, shell: str, clock: _Clock, files: dict) -> None:
    rng = em.rng
    make = em.entity("PROCESS", "make")
    em.emit(shell, make, "FORK", clock.tick())
    em.emit(make, files["bin_make"], "EXEC", clock.tick())
    em.emit(make, files["makefile"], "READ", clock.tick())
    objs = []
    for src in files["sources"]:
        cc = em.entity("PROCESS", reg.compiler)
        em.emit(make, cc, "FORK", clock.tick())
        em.emit(cc, files["bin_cc"], "EXEC", clock.tick())
        em.emit(cc, files["libc"], "MMAP", clock.tick())
        em.emit(cc, src, "READ", clock.tick())
        em.emit(cc, files["header"], "READ", clock.tick())
        obj = files["objects"][src]
        em.emit(cc, obj, "WRITE", clock.tick())
        objs.append(obj)
    ld = em.entity("PROCESS", "ld")
    em.emit(make, ld, "FORK", clock.tick())
    em.emit(ld, files["bin_ld"], "EXEC", clock.tick())
    for obj in rng.sample(objs, len(objs)):
        em.emit(ld, obj, "READ", clock.tick())
    em.emit(ld, files["artifact"], "WRITE", clock.tick())


def _regime_files(em: _Emitter, reg: Regime, libc: str) -> dict:
    files = {
        "libc": libc,
        "profile": em.entity("FILE", reg.profile),
        "cache": [em.entity("FILE", f"{reg.cache_dir}/{i:04X}") for i in range(6)],
        "inbox": em.entity("FILE", "/home/alice/Mail/INBOX"),
        "bin_make": em.entity("FILE", "/usr/bin/make"),
        "bin_cc": em.entity("FILE", f"/usr/bin/{reg.compiler}"),
        "bin_ld": em.entity("FILE", "/usr/bin/ld"),
        "makefile": em.entity("FILE", f"{reg.project}/Makefile"),
        "header": em.entity("FILE", "/usr/include/stdio.h"),
        "artifact": em.entity("FILE", f"{reg.project}/build/app"),
    }
    files["sources"] = [em.entity("FILE", f"{reg.project}/src/{s}") for s in reg.sources]
    files["objects"] = {
        src: em.entity("FILE", f"{reg.project}/build/{name[:-2]}.o")
        for src, name in zip(files["sources"], reg.sources)
    }
    return files


def _attack(em: _Emitter, step: int, start: int, end: int, ctx: dict, reg: Regime) -> None:
    """One stage of the intrusion; ``ctx`` carries entities across stages."""
    clock = _Clock(em.rng, start, end, t0=start + (end - start) // 2)
    if step == 0:
        ctx["c2"] = em.entity("SOCKET", C2_ADDR)
        ctx["tab"] = em.entity("PROCESS", reg.browser)
        ctx["drop"] = em.entity("FILE", "/tmp/.X11-unix/.loaderDrakon")
        ctx["loader"] = em.entity("PROCESS", "loaderDrakon")
        em.emit(ctx["main"], ctx["tab"], "CLONE", clock.tick())
        for _ in range(3):
            em.emit(ctx["tab"], ctx["c2"], "RECVFROM", clock.tick(0.1, 2.0), attack=True)
        em.emit(ctx["tab"], ctx["drop"], "WRITE", clock.tick(), attack=True)
        em.emit(ctx["tab"], ctx["loader"], "FORK", clock.tick(), attack=True)
        em.emit(ctx["loader"], ctx["drop"], "EXEC", clock.tick(), attack=True)
        em.emit(ctx["loader"], ctx["c2"], "SENDTO", clock.tick(), attack=True)
        em.emit(ctx["loader"], ctx["c2"], "RECVFROM", clock.tick(), attack=True)
    elif step == 1:
        esc = em.entity("PROCESS", "pkexec")
        shadow = em.entity("FILE", "/etc/shadow")
        inj = em.entity("PROCESS", "sshd")
        log_file = em.entity("FILE", "/var/log/sshdlog")
        exfil = em.entity("SOCKET", EXFIL_ADDR)
        em.emit(ctx["loader"], ctx["c2"], "RECVFROM", clock.tick(), attack=True)
        em.emit(ctx["loader"], esc, "FORK", clock.tick(), attack=True)
        em.emit(esc, shadow, "READ", clock.tick(), attack=True)
        em.emit(esc, inj, "CLONE", clock.tick(), attack=True)
        em.emit(inj, log_file, "WRITE", clock.tick(), attack=True)
        em.emit(inj, exfil, "SENDTO", clock.tick(), attack=True)
        ctx["inj"] = inj
    else:
        em.emit(ctx["loader"], ctx["c2"], "RECVFROM", clock.tick(), attack=True)
        em.emit(ctx["inj"], ctx["drop"], "READ", clock.tick(), attack=True)
        exfil = em.entity("SOCKET", EXFIL_ADDR)
        em.emit(ctx["inj"], exfil, "SENDTO", clock.tick(), attack=True)


def generate(spec: ScenarioSpec) -> SynthResult:
    """Deterministic stream + labels for ``spec``."""
    rng = random.Random(spec.seed)
    em = _Emitter(rng)
    libc = em.entity("FILE", "/lib/x86_64-linux-gnu/libc.so.6")
    shell = em.entity("PROCESS", "bash")
    mail = em.entity("PROCESS", "thunderbird")
    regimes = {}
    mains = {}
    for name, reg in (("before", BEFORE), ("after", AFTER)):
        regimes[name] = (reg, _regime_files(em, reg, libc))
        mains[name] = em.entity("PROCESS", reg.browser)

    attack_ctx: dict = {}
    attack_step = 0
    per_window: List[int] = []
    for w in range(spec.windows):
        start = spec.start_ns + w * spec.window_ns
        end = start + spec.window_ns
        key = "after" if spec.drift_at is not None and w >= spec.drift_at else "before"
        reg, files = regimes[key]
        before = len(em.records)
        if w == 0 or (spec.drift_at is not None and w == spec.drift_at):
            em.emit(shell, mains[key], "FORK", start)
        for _ in range(spec.browser_sessions + rng.randint(-2, 2)):
            _browser_session(em, reg, mains[key], _Clock(rng, start, end), files)
        for _ in range(spec.mail_sessions + rng.randint(-1, 1)):
            _mail_session(em, reg, mail, _Clock(rng, start, end), files)
        for _ in range(spec.build_jobs):
            _build_job(em, reg, shell, _Clock(rng, start, end), files)
        if w in spec.attack_windows:
            attack_ctx["main"] = mains[key]
            _attack(em, attack_step, start, end, attack_ctx, reg)
            attack_step += 1
        per_window.append(len(em.records) - before)

    em.records.sort(key=lambda r: (r[0], r[1]))
    lines = [json.dumps(rec, sort_keys=True) for _, _, rec, _ in em.records]
    attack_windows = sorted(set(spec.attack_windows))
    labels = [
        json.dumps({"window_index": w, "label": "attack" if w in attack_windows else "benign",
                    "events": per_window[w]}, sort_keys=True)
        for w in range(spec.windows)
    ]
    labels += [
        json.dumps({"node_uuid": uid, "label": "attack" if uid in em.attack_nodes else "benign"},
                   sort_keys=True)
        for uid in sorted(em.entities)
    ]
    counts = {
        "seed": spec.seed,
        "events": len(lines),
        "attack_events": sum(1 for r in em.records if r[3]),
        "events_per_window": per_window,
        "entities": len(em.entities),
        "attack_nodes": len(em.attack_nodes),
        "attack_windows": attack_windows,
        "drift_at": spec.drift_at,
    }
    return SynthResult(lines, labels, counts, sorted(em.attack_nodes))
