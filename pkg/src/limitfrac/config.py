"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .adapt import AdaptConfig
from .model import ModelParams
from .solver import SolverConfig
from .state import LoadSpec

DRIVERS = ("I", "II", "III")


class ConfigError(ValueError):
    """Bad configuration file or value."""


@dataclass(frozen=True)
class Config:
    model: ModelParams = field(default_factory=ModelParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    load: LoadSpec = field(default_factory=LoadSpec)
    mesh_n: int = 8
    slit_depth: float = 0.5
    driver: str = "I"
    xi_cr: float = 1e-4
    output_dir: str = "output"
    snapshot_every: int = 10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.mesh_n < 2 or self.mesh_n % 2:
            raise ValueError("mesh_n must be an even integer >= 2")
        if not 0 < self.slit_depth < 1:
            raise ValueError("slit_depth must lie in (0, 1)")
        if self.driver not in DRIVERS:
            raise ValueError(f"driver must be one of {DRIVERS}")
        if not self.xi_cr >= 0:
            raise ValueError("xi_cr must be non-negative")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be a positive integer")

    def items(self):
        """Every effective parameter as ``(key, value)``, in a fixed order."""
        for key, (group, name) in _KEYS.items():
            owner = self if group is None else getattr(self, group)
            yield key, getattr(owner, name)


_GROUPS = {"model": ModelParams, "solver": SolverConfig, "adapt": AdaptConfig, "load": LoadSpec}


def _build_keys():
    keys = {}
    for group, cls in _GROUPS.items():
        for f in dataclasses.fields(cls):
            keys[f.name] = (group, f.name)
    for f in dataclasses.fields(Config):
        if f.name not in _GROUPS:
            keys[f.name] = (None, f.name)
    return keys


_KEYS = _build_keys()


def _field_type(group, name):
    cls = Config if group is None else _GROUPS[group]
    default = next(f for f in dataclasses.fields(cls) if f.name == name)
    value = default.default
    if value is dataclasses.MISSING:
        value = default.default_factory()
    return type(value)


def _convert(raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def build_config(values: dict, lines: dict | None = None) -> Config:
    """Config from a flat mapping of keys to raw strings or typed values."""
    lines = lines or {}
    grouped = {g: {} for g in _GROUPS}
    top = {}
    for key, raw in values.items():
        where = f"line {lines[key]}: " if key in lines else ""
        if key not in _KEYS:
            raise ConfigError(f"{where}unknown key {key!r}")
        group, name = _KEYS[key]
        try:
            value = _convert(raw, _field_type(group, name)) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"{where}cannot parse {key} = {raw!r}: {exc}") from None
        (top if group is None else grouped[group])[name] = value
    parts = {}
    for group, cls in _GROUPS.items():
        try:
            parts[group] = cls(**grouped[group])
        except ValueError as exc:
            names = [k for k in grouped[group] if k in lines]
            where = f"line {lines[names[0]]}: " if len(names) == 1 else ""
            raise ConfigError(f"{where}{exc}") from None
    try:
        return Config(**parts, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path, environ=None) -> Config:
    """Read a config file; ``LIMITFRAC_THREADS`` and ``LIMITFRAC_OUTDIR`` override it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror}") from None
    values, lines = {}, {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        values[key], lines[key] = raw, number
    environ = os.environ if environ is None else environ
    if "LIMITFRAC_THREADS" in environ:
        values["threads"] = environ["LIMITFRAC_THREADS"]
        lines.pop("threads", None)
    if "LIMITFRAC_OUTDIR" in environ:
        values["output_dir"] = environ["LIMITFRAC_OUTDIR"]
        lines.pop("output_dir", None)
    return build_config(values, lines)


def format_config(cfg: Config) -> list[str]:
    return [f"{key} = {value}" for key, value in cfg.items()]
