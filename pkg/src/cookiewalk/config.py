"""Experiment configuration: a flat sectioned text format, hashed verbatim.

Grammar (one construct per line, '#' starts a comment):

    [section]
    key = value
    component { weight = 0.5, cookies = [0.1, 0.9] }

Values: integers, floats, true/false, bracketed number lists, bare strings.
The ``[environment]`` section holds ``M``, ``law = deterministic|mixture``
and either one ``cookies = [...]`` line or repeated ``component { ... }``
lines.  Every run's outputs embed the SHA-256 of the raw config bytes, so
equal (config, seed) pairs are comparable byte-for-byte.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .environment import CookieEnvironment

_SECTION_RE = re.compile(r"^\[([a-zA-Z0-9_-]+)\]$")
_KEYVAL_RE = re.compile(r"^([a-zA-Z0-9_]+)\s*=\s*(.+)$")
_COMPONENT_RE = re.compile(r"^component\s*\{(.*)\}$")


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [parse_value(part) for part in inner.split(",")]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


@dataclass
class ExperimentConfig:
    sections: dict[str, dict] = field(default_factory=dict)
    components: list[dict] = field(default_factory=list)
    raw_text: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode("utf-8")).hexdigest()

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing required key {key!r} in section [{section}]")
        return value

    def environment(self) -> CookieEnvironment:
        env_sec = self.sections.get("environment")
        if env_sec is None:
            raise ConfigError("config has no [environment] section")
        law = env_sec.get("law", "deterministic")
        m = env_sec.get("M")
        if law == "deterministic":
            cookies = env_sec.get("cookies")
            if cookies is None:
                raise ConfigError("deterministic environment needs a cookies list")
            env = CookieEnvironment.deterministic([float(c) for c in cookies])
        elif law == "mixture":
            if not self.components:
                raise ConfigError("mixture environment needs component lines")
            env = CookieEnvironment.mixture(
                [(float(c["weight"]), [float(p) for p in c["cookies"]]) for c in self.components]
            )
        else:
            raise ConfigError(f"unknown law {law!r}")
        if m is not None and int(m) != env.m:
            raise ConfigError(f"declared M = {m} but cookies have length {env.m}")
        return env


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig(raw_text=text)
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            cfg.sections.setdefault(section, {})
            continue
        m = _COMPONENT_RE.match(line)
        if m:
            if section != "environment":
                raise ConfigError(f"line {lineno}: component outside [environment]")
            body = m.group(1)
            comp: dict = {}
            # split on commas not inside brackets
            parts = re.split(r",(?![^\[]*\])", body)
            for part in parts:
                km = _KEYVAL_RE.match(part.strip())
                if not km:
                    raise ConfigError(f"line {lineno}: bad component entry {part!r}")
                comp[km.group(1)] = parse_value(km.group(2))
            if "weight" not in comp or "cookies" not in comp:
                raise ConfigError(f"line {lineno}: component needs weight and cookies")
            cfg.components.append(comp)
            continue
        m = _KEYVAL_RE.match(line)
        if m:
            if section is None:
                raise ConfigError(f"line {lineno}: key/value before any [section]")
            cfg.sections[section][m.group(1)] = parse_value(m.group(2))
            continue
        raise ConfigError(f"line {lineno}: cannot parse {raw!r}")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def environment_config_block(env: CookieEnvironment) -> str:
    """Config text for an environment (matches the parse grammar)."""
    return "[environment]\n" + env.canonical_text() + "\n"
