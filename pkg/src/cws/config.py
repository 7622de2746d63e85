"""Service configuration with file overrides.

Config files are JSON; keys may be nested sections or flat dotted names,
e.g. {"predictor": {"alpha": 1e-6}} and {"predictor.alpha": 1e-6} are
equivalent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from cws.errors import ValidationError

MIB = 1024 ** 2
GIB = 1024 ** 3

DEFAULT_PORT = 8080
DEFAULT_POLL_TIMEOUT_MS = 30000


@dataclass
class PredictorConfig:
    alpha: float = 1e-6
    beta: float = 1.0
    default_runtime_s: float = 600.0
    share_across_workflows: bool = True


@dataclass
class MemoryConfig:
    safety_factor: float = 1.2
    doubling_cap: int = 3
    floor_bytes: int = 128 * MIB


@dataclass
class SimConfig:
    oom_delay_s: float = 1.0


@dataclass
class CwsConfig:
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    poll_timeout_ms: int = DEFAULT_POLL_TIMEOUT_MS

    @classmethod
    def from_file(cls, path: str | Path) -> "CwsConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"config {path} must be a JSON object")
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "CwsConfig":
        cfg = cls()
        sections = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "poll_timeout_ms"}
        for key, value in raw.items():
            if "." in key:
                section, _, leaf = key.partition(".")
                _set_leaf(sections, section, leaf, value)
            elif key in sections and isinstance(value, dict):
                for leaf, leaf_value in value.items():
                    _set_leaf(sections, key, leaf, leaf_value)
            elif key == "poll_timeout_ms":
                cfg.poll_timeout_ms = int(value)
            else:
                raise ValidationError(f"unknown config key {key!r}")
        return cfg


def _set_leaf(sections: dict, section: str, leaf: str, value) -> None:
    if section not in sections:
        raise ValidationError(f"unknown config section {section!r}")
    target = sections[section]
    if not hasattr(target, leaf):
        raise ValidationError(f"unknown config key {section}.{leaf}")
    current = getattr(target, leaf)
    setattr(target, leaf, type(current)(value))
