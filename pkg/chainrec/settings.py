"""
Run configuration for chainrec commands.

Values are layered, later layers winning:

1. ``DEFAULT_SETTINGS`` below
2. environment (``CHAINREC_WORKERS``, ``CHAINREC_LATTICE_CAP``,
   ``CHAINREC_OUTPUT_DIR``)
3. a plain-text ``key=value`` file passed with ``--config``
4. command-line flags

The merged mapping is validated by the ``RunConfig`` pydantic model.
"""

from __future__ import annotations

import logging
import os
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .chaingraph import EdgeMode
from .conley import DEFAULT_LATTICE_CAP

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("json", "csv", "dot")

DEFAULT_SETTINGS: Dict[str, Any] = {
    "map": "northsouth",
    "alpha": 0.618034,
    "a": 0.1,
    "grid": "1024",
    "mode": "center",
    "family": "canonical",
    "cap": DEFAULT_LATTICE_CAP,
    "out": "out",
    "formats": "json,csv,dot",
    "seed": 0,
    "points": 1000,
    "iters": 1000,
    "delta": 0.05,
    "min_returned": 0.99,
    "workers": 1,
}

ENV_OVERRIDES = {
    "CHAINREC_WORKERS": "workers",
    "CHAINREC_LATTICE_CAP": "cap",
    "CHAINREC_OUTPUT_DIR": "out",
}

# config-file / flag spellings that differ from field names
KEY_ALIASES = {"format": "formats"}


class ConfigError(ValueError):
    """Unreadable config file or invalid setting."""


def _number(text: Any) -> float:
    """Float from a number or a fraction string such as ``2/1024`` or ``1.5/256``."""
    if isinstance(text, (int, float)):
        return float(text)
    num, sep, den = str(text).strip().partition("/")
    try:
        value = Fraction(num.strip())
        if sep:
            value /= Fraction(den.strip())
        return float(value)
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"not a number: {text!r}") from e


def _split(value: Any, sep: str = ",") -> List[str]:
    if isinstance(value, str):
        return [part.strip() for part in value.split(sep) if part.strip()]
    return list(value)


class RunConfig(BaseModel):
    """Validated settings for one command invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    map: str = Field(min_length=1)
    alpha: float = 0.0
    a: float = 0.0
    grid: Tuple[int, ...]
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None
    periodic: Optional[Tuple[bool, ...]] = None
    epsilon: Optional[float] = None
    mode: EdgeMode = EdgeMode.CENTER
    family: Literal["canonical", "full"] = "canonical"
    cap: int = Field(default=DEFAULT_LATTICE_CAP, ge=1)
    out: Path = Path("out")
    formats: Tuple[str, ...] = OUTPUT_FORMATS
    seed: int = 0
    points: int = Field(default=1000, ge=1)
    iters: int = Field(default=1000, ge=1)
    delta: float = Field(default=0.05, gt=0)
    connectivity: bool = False
    require_connected: bool = False
    min_returned: float = Field(default=0.99, ge=0.0, le=1.0)
    epsilons: Tuple[float, ...] = ()
    workers: int = Field(default=1, ge=1)
    record_timings: bool = False

    @field_validator("grid", mode="before")
    @classmethod
    def parse_grid(cls, v: Any) -> Tuple[int, ...]:
        if isinstance(v, int):
            v = (v,)
        elif isinstance(v, str):
            v = _split(v.replace("x", ","))
        sizes = tuple(int(n) for n in v)
        if not sizes or any(n < 2 for n in sizes):
            raise ValueError(f"grid needs at least 2 subdivisions per axis, got {sizes}")
        return sizes

    @field_validator("bounds", mode="before")
    @classmethod
    def parse_bounds(cls, v: Any) -> Any:
        if isinstance(v, str):
            pairs = []
            for part in _split(v):
                lo, _, hi = part.partition(":")
                pairs.append((_number(lo), _number(hi)))
            return tuple(pairs)
        return v

    @field_validator("periodic", mode="before")
    @classmethod
    def parse_periodic(cls, v: Any) -> Any:
        return tuple(_split(v)) if isinstance(v, str) else v

    @field_validator("epsilon", "alpha", "a", "delta", mode="before")
    @classmethod
    def parse_number(cls, v: Any) -> Any:
        return None if v is None else _number(v)

    @field_validator("epsilon")
    @classmethod
    def positive_epsilon(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError(f"epsilon must be positive, got {v}")
        return v

    @field_validator("epsilons", mode="before")
    @classmethod
    def parse_epsilons(cls, v: Any) -> Tuple[float, ...]:
        values = tuple(_number(x) for x in _split(v))
        if any(e <= 0 for e in values):
            raise ValueError("sweep epsilons must be positive")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("sweep epsilons must be ascending")
        return values

    @field_validator("formats", mode="before")
    @classmethod
    def parse_formats(cls, v: Any) -> Tuple[str, ...]:
        names = tuple(dict.fromkeys(x.lower() for x in _split(v)))
        unknown = [n for n in names if n not in OUTPUT_FORMATS]
        if unknown:
            raise ValueError(f"unknown output formats {unknown}; choose from {OUTPUT_FORMATS}")
        return names


def normalize_key(key: str) -> str:
    key = key.strip().lstrip("-").replace("-", "_")
    return KEY_ALIASES.get(key, key)


def load_config_file(path: Path) -> Dict[str, str]:
    """Read ``key=value`` lines; ``#`` starts a comment."""
    values: Dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        name = normalize_key(key)
        if name not in RunConfig.model_fields:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key.strip()!r}")
        values[name] = value.strip()
    logger.debug("Loaded %d settings from %s", len(values), path)
    return values


def env_settings(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    found: Dict[str, str] = {}
    for var, key in ENV_OVERRIDES.items():
        value = environ.get(var, "").strip()
        if value:
            found[key] = value
    return found


def build_run_config(
    flags: Optional[Mapping[str, Any]] = None,
    config_path: Optional[Path] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge defaults, environment, config file and flags into a ``RunConfig``."""
    merged: Dict[str, Any] = dict(DEFAULT_SETTINGS)
    merged.update(env_settings(environ))
    if config_path is not None:
        merged.update(load_config_file(config_path))
    merged.update({normalize_key(k): v for k, v in (flags or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e
