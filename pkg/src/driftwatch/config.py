"""Pipeline configuration.

The on-disk format is flat ``key = value`` text, one setting per line, with
``#`` comments. Lists (``whitelist``) are comma separated. Values resolve in
the order default < config file < ``DRIFTWATCH_<KEY>`` environment variable
< explicit overrides (CLI flags).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

ENV_PREFIX = "DRIFTWATCH_"
MINUTE_NS = 60 * 10**9

DEFAULT_WHITELIST = ("libc.so", "libm.so", "ld.so", "libdl")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # windowing / preprocessing
    window_ns: int = 15 * MINUTE_NS
    whitelist: Tuple[str, ...] = DEFAULT_WHITELIST
    hash_dim: int = 64
    decay_beta: float = 0.95
    strict_max: bool = False
    # detection
    sigma_k: float = 2.0
    d_mem: int = 32
    d_emb: int = 32
    d_time: int = 8
    d_hidden: int = 32
    learning_rate: float = 0.03
    k_nb: int = 16
    epochs: int = 1
    grad_clip: float = 5.0
    attention: str = "softmax"
    warmup_windows: int = 0
    # rehearsal
    gamma: float = 0.5
    k_hop: int = 4
    p_max: int = 3
    pool_capacity: Optional[int] = None
    # investigation
    delta: float = 0.7
    walks: int = 20
    walk_len: int = 16
    # misc
    seed: int = 0
    # ablation switches
    use_pseudo_edges: bool = True
    use_state_transfer: bool = True
    use_path_filter: bool = True

    def __post_init__(self) -> None:
        if self.hash_dim < 8:
            raise ConfigError("hash_dim must be >= 8")
        if not 0.0 < self.decay_beta <= 1.0:
            raise ConfigError("decay_beta must lie in (0, 1]")
        if self.window_ns <= 0:
            raise ConfigError("window_ns must be positive")
        if self.attention not in ("softmax", "sum"):
            raise ConfigError("attention must be 'softmax' or 'sum'")
        for name in ("d_mem", "d_emb", "d_time", "d_hidden", "k_nb", "epochs",
                     "walks", "walk_len", "k_hop"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate < 0 or self.p_max < 0:
            raise ConfigError("learning_rate and p_max must be non-negative")

    @property
    def encoding_dim(self) -> int:
        return 2 * self.hash_dim + 2 + 9

    def replace(self, **changes: Any) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["whitelist"] = list(self.whitelist)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Config":
        return cls(**{k: _coerce(k, v) for k, v in data.items()})


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}
_ALIASES = {"window_minutes": "window_ns", "beta": "decay_beta"}


def _coerce(key: str, value: Any) -> Any:
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key: {key}")
    if not isinstance(value, str):
        if key == "whitelist":
            return tuple(value)
        return value
    value = value.strip()
    default = _FIELDS[key].default
    if key == "whitelist":
        return tuple(s.strip() for s in value.split(",") if s.strip())
    if key == "pool_capacity":
        return None if value.lower() in ("", "none") else int(value)
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {value!r}")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return value


def _normalize(raw: Mapping[str, str]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in raw.items():
        key = key.strip().lower()
        if key == "window_minutes":
            out["window_ns"] = int(float(value) * MINUTE_NS)
            continue
        key = _ALIASES.get(key, key)
        out[key] = _coerce(key, value)
    return out


def parse_kv_text(text: str) -> Dict[str, str]:
    """Raw ``key = value`` pairs; keys lower-cased, values left as strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        raw[key.strip().lower()] = value.strip()
    return raw


def parse_config_text(text: str) -> Dict[str, Any]:
    return _normalize(parse_kv_text(text))


def load_config(
    path: Optional[os.PathLike] = None,
    overrides: Optional[Mapping[str, str]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Config:
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    env = os.environ if environ is None else environ
    values.update(_normalize({
        k[len(ENV_PREFIX):]: v for k, v in env.items() if k.startswith(ENV_PREFIX)
    }))
    if overrides:
        values.update(_normalize(overrides))
    return Config(**values)
