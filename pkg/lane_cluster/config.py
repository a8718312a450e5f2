"""
TOML-backed settings.

All tunable constants live in one frozen Settings value. A settings file
overrides any subset of them:

    [roi]
    x_min = -25.0
    [loss]
    outlier_weight = 0.1
    alpha = 1.0
    [em]
    sigma = 1.0

Unknown tables or keys are rejected so that typos never pass silently.
"""

from __future__ import annotations

import dataclasses
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, ValidationError
from .geometry import DEFAULT_ROI, RegionOfInterest


@dataclass(frozen=True)
class LossSettings:
    outlier_weight: float = 0.1
    alpha: float = 1.0
    bce_eps: float = 1e-7
    huber_delta: float = 1e-3


@dataclass(frozen=True)
class MatchingSettings:
    existence_weight: float = 1.0
    pad_sentinel: float = 1e6


@dataclass(frozen=True)
class MetricSettings:
    samples: int = 100
    thresholds: tuple[float, ...] = (0.5, 1.0, 1.5)
    detect_threshold: float = 1.0


@dataclass(frozen=True)
class EmSettings:
    sigma: float = 1.0
    outlier_density: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-6
    inner_rounds: int = 2
    freeze_weight: float = 1e-8
    damping: float = 1e-9


@dataclass(frozen=True)
class Settings:
    roi: RegionOfInterest = DEFAULT_ROI
    loss: LossSettings = field(default_factory=LossSettings)
    matching: MatchingSettings = field(default_factory=MatchingSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    em: EmSettings = field(default_factory=EmSettings)


DEFAULT_SETTINGS = Settings()


def _override(section: Any, table: Any, name: str, path: Path) -> Any:
    if not isinstance(table, dict):
        raise ConfigError(f"Settings file {path}: [{name}] must be a table.")
    known = {f.name: f for f in dataclasses.fields(section)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"Settings file {path}: unknown keys in [{name}]: {unknown}")

    values: dict[str, Any] = {}
    for key, raw in table.items():
        current = getattr(section, key)
        if isinstance(current, tuple):
            if not isinstance(raw, list):
                raise ConfigError(f"Settings file {path}: {name}.{key} must be an array.")
            values[key] = tuple(float(v) for v in raw)
        elif isinstance(current, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"Settings file {path}: {name}.{key} must be a number, got {raw!r}.")
        else:
            values[key] = type(current)(raw)
    try:
        return dataclasses.replace(section, **values)
    except ValidationError as exc:
        raise ConfigError(f"Settings file {path}: invalid [{name}]: {exc}") from exc


def load_settings(path: str | Path | None) -> Settings:
    """Read a settings file; None yields the defaults."""
    if path is None:
        return DEFAULT_SETTINGS
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"Failed to read settings file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"Failed to parse TOML settings file {path}: {exc}") from exc

    sections = {f.name for f in dataclasses.fields(Settings)}
    unknown = sorted(set(raw) - sections)
    if unknown:
        raise ConfigError(f"Settings file {path}: unknown tables {unknown}")

    settings = DEFAULT_SETTINGS
    for name, table in raw.items():
        updated = _override(getattr(settings, name), table, name, path)
        settings = dataclasses.replace(settings, **{name: updated})
    return settings
