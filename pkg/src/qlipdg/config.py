"""Run configuration: a ``key = value`` file with command-line overrides."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .problem import MANUFACTURED_NAMES


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class StudyConfig:
    preset: str = "heat_decay"
    degrees: tuple = (1, 2)
    levels: int = 3
    base: int = 4
    theta: int = 0
    c_sigma: float = 10.0
    dt: float | None = None
    t_final: float = 0.1
    out: str = "out"
    seed: int = 0
    jobs: int = 1
    newton_tol: float = 1e-10

    def __post_init__(self):
        if self.preset not in MANUFACTURED_NAMES:
            raise ConfigError(f"preset: unknown problem {self.preset!r}; expected one of {MANUFACTURED_NAMES}")
        if not self.degrees or any(int(p) != p or p < 1 for p in self.degrees):
            raise ConfigError(f"degrees: every degree must be an integer >= 1, got {self.degrees}")
        if self.levels < 1:
            raise ConfigError(f"levels: need at least one level, got {self.levels}")
        if self.base < 1:
            raise ConfigError(f"base: need at least one cell per direction, got {self.base}")
        if self.theta not in (-1, 0, 1):
            raise ConfigError(f"theta: must be -1, 0 or 1, got {self.theta}")
        if not (math.isfinite(self.c_sigma) and self.c_sigma > 1.0):
            raise ConfigError(f"c_sigma: must exceed 1, got {self.c_sigma}")
        if not (math.isfinite(self.t_final) and self.t_final > 0):
            raise ConfigError(f"t_final: must be positive, got {self.t_final}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt: must be positive, got {self.dt}")
        if self.jobs < 1:
            raise ConfigError(f"jobs: must be at least 1, got {self.jobs}")
        if not self.newton_tol > 0:
            raise ConfigError(f"newton_tol: must be positive, got {self.newton_tol}")


_FIELDS = {f.name: f for f in fields(StudyConfig)}


def _parse_value(key, text):
    text = text.strip()
    try:
        if key == "degrees":
            return tuple(int(v) for v in text.replace(",", " ").split())
        if key in ("levels", "base", "theta", "seed", "jobs"):
            return int(text)
        if key in ("c_sigma", "t_final", "newton_tol"):
            return float(text)
        if key == "dt":
            return None if text.lower() in ("", "auto", "none") else float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment.  Keys may use dashes."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "p":
            key = "degrees"
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key (line {lineno})")
        values[key] = _parse_value(key, value)
    return values


def build_config(path=None, **overrides):
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values = read_config_file(path) if path is not None else {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        values[key] = _parse_value(key, value) if isinstance(value, str) else value
    if "degrees" in values:
        values["degrees"] = tuple(values["degrees"])
    return StudyConfig(**values)
