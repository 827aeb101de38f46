"""Tunable constants for one benchmark run and ``key=value`` overrides of them."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

from .controllers import A2cConfig, DqnConfig, MonopolyConfig, RrConfig
from .sim import SimConfig
from .traffic import GenConfig


class ConfigError(ValueError):
    """Malformed configuration: unknown key, bad value or inconsistent combination."""


@dataclass
class MonopolyRange:
    min_time: int = 5
    max_time: int = 60
    step: int = 5

    def build(self) -> MonopolyConfig:
        return MonopolyConfig.from_range(self.min_time, self.max_time, self.step)


@dataclass
class Settings:
    sim: SimConfig = field(default_factory=SimConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    rr: RrConfig = field(default_factory=RrConfig)
    monopoly: MonopolyRange = field(default_factory=MonopolyRange)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    a2c: A2cConfig = field(default_factory=A2cConfig)

    SECTIONS = ("sim", "gen", "rr", "monopoly", "dqn", "a2c")
    # Fields owned by the run itself rather than overridable.
    _FIXED = {("gen", "seed"), ("gen", "episode_length"), ("rr", "arm_order")}

    def keys(self) -> dict[str, tuple[str, str]]:
        out = {}
        for section in self.SECTIONS:
            for f in dataclasses.fields(getattr(self, section)):
                if (section, f.name) not in self._FIXED:
                    out[f"{section}.{f.name}"] = (section, f.name)
        return out


def _coerce(value: Any, like: Any, key: str):
    if isinstance(value, str):
        text = value.strip()
        try:
            if isinstance(like, bool):
                if text.lower() in ("1", "true", "yes"):
                    return True
                if text.lower() in ("0", "false", "no"):
                    return False
                raise ValueError(text)
            if isinstance(like, int):
                return int(text)
            if isinstance(like, float):
                return float(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r} as {type(like).__name__}") from None
        return text
    if isinstance(like, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if type(value) is not type(like):
        raise ConfigError(f"{key}: expected {type(like).__name__}, got {value!r}")
    return value


def apply_overrides(settings: Settings, overrides: Mapping[str, Any]) -> Settings:
    """Return new settings with ``section.field`` (or unambiguous ``field``) keys replaced."""
    known = settings.keys()
    by_field: dict[str, list[str]] = {}
    for full, (_, name) in known.items():
        by_field.setdefault(name, []).append(full)
    changes: dict[str, dict[str, Any]] = {}
    for key, value in overrides.items():
        full = key
        if full not in known:
            matches = by_field.get(key, [])
            if len(matches) == 1:
                full = matches[0]
            elif matches:
                raise ConfigError(f"ambiguous override key {key!r}; use one of {sorted(matches)}")
            else:
                raise ConfigError(f"unknown override key {key!r}")
        section, name = known[full]
        current = getattr(getattr(settings, section), name)
        changes.setdefault(section, {})[name] = _coerce(value, current, full)
    out = dataclasses.replace(settings)
    for section, kw in changes.items():
        try:
            setattr(out, section, dataclasses.replace(getattr(settings, section), **kw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {section} settings: {exc}") from None
    try:
        out.monopoly.build()
    except ValueError as exc:
        raise ConfigError(f"invalid monopoly settings: {exc}") from None
    return out


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected key=value, got {text!r}")
    return key.strip(), value
