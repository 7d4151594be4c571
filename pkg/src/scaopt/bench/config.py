"""
Experiment configuration files.

Grammar (one item per line)::

    # comment                 ignored, as are blank lines
    [section]                 starts a section
    key = value               assignment inside the current section

Sections are ``experiment``, ``problem``, ``algorithm``, ``graph`` and
``budget``. Keys are lowercase identifiers; each key appears at most once
per section. Values are integers, floats, ``true``/``false`` or bare
strings; anything after `` #`` on a value line is a comment.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from ..errors import ConfigurationError

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "parse_value",
           "SECTIONS"]

SECTIONS = ("experiment", "problem", "algorithm", "graph", "budget")

_SECTION = re.compile(r"^\[([a-z_][a-z0-9_]*)\]$")
_ASSIGN = re.compile(r"^([a-z_][a-z0-9_]*)\s*=\s*(.*)$")
_INT = re.compile(r"^[+-]?\d+$")


class ConfigError(ConfigurationError):
    """Malformed or invalid configuration; carries the offending line."""

    def __init__(self, message: str, path: str = "<config>", line: Optional[int] = None):
        self.path = path
        self.line = line
        self.reason = message
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


def parse_value(text: str) -> Any:
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if _INT.match(t):
        return int(t)
    try:
        return float(t)
    except ValueError:
        return t


@dataclass
class RunConfig:
    """
    Parsed experiment description.

    ``lines`` maps ``(section, key)`` to the line it was read from, so that
    semantic validation can point at the offending line too.
    """

    name: str
    seed: int
    output_dir: Optional[str]
    problem: Dict[str, Any]
    algorithm: Dict[str, Any]
    graph: Dict[str, Any] = field(default_factory=dict)
    budget: Dict[str, Any] = field(default_factory=dict)
    path: str = "<config>"
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    def error(self, section: str, key: Optional[str], message: str) -> ConfigError:
        line = self.lines.get((section, key)) if key is not None else None
        if line is None:
            line = self.lines.get((section, None))
        return ConfigError(message, self.path, line)

    def resolve(self, p: str) -> str:
        """Paths in a config file are relative to the file's directory."""
        if os.path.isabs(p) or self.path.startswith("<"):
            return p
        return os.path.join(os.path.dirname(os.path.abspath(self.path)), p)


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` with a line number."""
    data: Dict[str, Dict[str, Any]] = {}
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", path, ln)
            if section in data:
                raise ConfigError(f"duplicate section [{section}]", path, ln)
            data[section] = {}
            lines[(section, None)] = ln
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ConfigError(f"expected '[section]' or 'key = value', got {line!r}", path, ln)
        if section is None:
            raise ConfigError("assignment before any section header", path, ln)
        key, value = m.group(1), m.group(2)
        value = value.split(" #", 1)[0].strip()
        if value.startswith("="):
            raise ConfigError(f"malformed assignment for {key!r}", path, ln)
        if value == "":
            raise ConfigError(f"missing value for {key!r}", path, ln)
        if key in data[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", path, ln)
        data[section][key] = parse_value(value)
        lines[(section, key)] = ln
    for need in ("experiment", "problem", "algorithm"):
        if need not in data:
            raise ConfigError(f"missing section [{need}]", path, None)
    exp = dict(data["experiment"])
    unknown = set(exp) - {"name", "seed", "output_dir"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key {k!r} in [experiment]", path, lines[("experiment", k)])
    name = str(exp.get("name", os.path.splitext(os.path.basename(path))[0]))
    if not re.match(r"^[A-Za-z0-9_.-]+$", name):
        raise ConfigError(f"experiment name {name!r} is not a plain file stem", path,
                          lines.get(("experiment", "name")))
    seed = exp.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer", path,
                          lines.get(("experiment", "seed")))
    out = exp.get("output_dir")
    return RunConfig(name=name, seed=seed, output_dir=None if out is None else str(out),
                     problem=data["problem"], algorithm=data["algorithm"],
                     graph=data.get("graph", {}), budget=data.get("budget", {}),
                     path=path, lines=lines)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path, None) from exc
    return parse_config(text, path)
