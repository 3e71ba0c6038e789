"""YAML run configuration: cost profiles, endpoints, score orientations.

Example::

    cost_profiles:
      tower-7b+kiwi22: {n_small: 7.0e9, n_qe: 0.5e9, n_large: 70.0e9}
    orientations:
      quality_small: lower_better
      quality_large: lower_better
    endpoints:
      small: {base_url: "http://localhost:8001/v1", model_name: tower-7b}
      qe:    {base_url: "http://localhost:8002", model_name: cometkiwi-22}
      large: {base_url: "http://localhost:8003/v1", model_name: tower-70b,
              auth_token_env: LARGE_API_TOKEN}
    cache_dir: .mtcascade-cache
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import Direction, ScoreOrientation
from .costmodel import BUILTIN_PROFILES, CostModel
from .errors import ConfigError, DomainError
from .gateway import EndpointConfig

CONFIG_ENV = "MTCASCADE_CONFIG"


@dataclass
class Config:
    cost_profiles: dict[str, CostModel] = field(default_factory=lambda: dict(BUILTIN_PROFILES))
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    orientations: list[ScoreOrientation] = field(default_factory=list)
    cache_dir: str | None = None
    lang_pair: str = ""
    path: str | None = None

    def cost_profile(self, name: str) -> CostModel:
        try:
            return self.cost_profiles[name]
        except KeyError:
            raise ConfigError(f"unknown cost profile {name!r}; known: {sorted(self.cost_profiles)}") from None

    def endpoint(self, role: str) -> EndpointConfig:
        try:
            return self.endpoints[role]
        except KeyError:
            raise ConfigError(f"config has no endpoint {role!r}") from None


def parse_config(data: dict[str, Any], path: str | None = None) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - {"cost_profiles", "endpoints", "orientations", "cache_dir", "lang_pair"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = Config(path=path)
    for name, spec in (data.get("cost_profiles") or {}).items():
        try:
            cfg.cost_profiles[name] = CostModel.from_dict(spec, name=name)
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"cost profile {name!r}: {exc}") from None
    for role, spec in (data.get("endpoints") or {}).items():
        cfg.endpoints[role] = EndpointConfig.from_dict(dict(spec))
    for column, direction in (data.get("orientations") or {}).items():
        try:
            cfg.orientations.append(ScoreOrientation(column, Direction(direction)))
        except ValueError:
            raise ConfigError(f"orientation for {column!r} must be higher_better or lower_better") from None
    cfg.cache_dir = data.get("cache_dir")
    cfg.lang_pair = data.get("lang_pair", "")
    return cfg


def load_config(path: str | Path | None = None) -> Config:
    """Load ``path``, else ``$MTCASCADE_CONFIG``, else built-in defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, str(path))
