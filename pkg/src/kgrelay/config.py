"""Configuration: flat key = value files, environment, CLI overrides.

Precedence, lowest to highest: built-in defaults, config file, KGRELAY_*
environment variables, explicit overrides. Unknown keys in a file are
rejected so typos fail loudly. Secrets never live in the file; HTTP
providers read their API key from the environment variable named by
*_key_env.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .providers import (
    ROLE_GENERAL,
    ROLE_SPECIALIZED,
    HttpLlm,
    ScriptedLlm,
    TokenOverlapEmbedder,
)
from .repair import RepairConfig

ENV_PREFIX = "KGRELAY_"


@dataclass
class Settings:
    kg: str | None = None
    specialized_script: str | None = None
    specialized_url: str | None = None
    specialized_model: str | None = None
    specialized_key_env: str = "KGRELAY_API_KEY"
    general_script: str | None = None
    general_url: str | None = None
    general_model: str | None = None
    general_key_env: str = "KGRELAY_API_KEY"
    embedder: str = "token-overlap"
    beam_width: int = 3
    relation_filter: int = 4
    path_filter: int = 10
    max_depth_cap: int = 4
    relaxation: bool = True
    workers: int = 1
    seed: int = 42
    price_specialized_input: float = 0.05
    price_specialized_output: float = 0.25
    price_general_input: float = 0.15
    price_general_output: float = 0.60


_FIELD_TYPES = {f.name: f.type for f in fields(Settings)}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    text = raw.strip()
    if ftype == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}")
    if ftype == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}")
    if ftype == "bool":
        low = text.casefold()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    return text


def _parse_file(path: str | Path) -> dict:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    values = {}
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_settings(path: str | Path | None = None, overrides: dict | None = None) -> Settings:
    values: dict = {}
    if path is not None:
        values.update(_parse_file(path))
    for key in _FIELD_TYPES:
        env_name = ENV_PREFIX + key.upper()
        if env_name in os.environ:
            values[key] = _coerce(key, os.environ[env_name])
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = value
    return Settings(**values)


def repair_config(settings: Settings) -> RepairConfig:
    if min(settings.beam_width, settings.relation_filter, settings.path_filter) < 1:
        raise ConfigError("beam_width, relation_filter, path_filter must be >= 1")
    if settings.max_depth_cap < 1:
        raise ConfigError("max_depth_cap must be >= 1")
    return RepairConfig(
        beam_width=settings.beam_width,
        relation_filter=settings.relation_filter,
        path_filter=settings.path_filter,
        max_depth_cap=settings.max_depth_cap,
    )


def price_table(settings: Settings) -> dict[str, tuple[float, float]]:
    return {
        ROLE_SPECIALIZED: (
            settings.price_specialized_input,
            settings.price_specialized_output,
        ),
        ROLE_GENERAL: (settings.price_general_input, settings.price_general_output),
    }


def _load_script(path: str) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            entries = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load script {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError(f"script {path} must be a JSON list")
    return entries


def provider_factory(settings: Settings, need_specialized: bool = True,
                     need_general: bool = True):
    """Build a per-question provider factory from the settings.

    Scripted providers are rebuilt on every call so replay state never
    leaks between questions; HTTP providers are shared. Raises
    ConfigError when a needed role has no provider configured.
    """
    spec_entries = gen_entries = None
    spec_http = gen_http = None

    if settings.specialized_script:
        spec_entries = _load_script(settings.specialized_script)
    elif settings.specialized_url:
        if not settings.specialized_model:
            raise ConfigError("specialized_model is required with specialized_url")
        spec_http = HttpLlm(
            settings.specialized_url, settings.specialized_model,
            key_env=settings.specialized_key_env,
        )
    elif need_specialized:
        raise ConfigError("no specialized provider configured")

    if settings.general_script:
        gen_entries = _load_script(settings.general_script)
    elif settings.general_url:
        if not settings.general_model:
            raise ConfigError("general_model is required with general_url")
        gen_http = HttpLlm(
            settings.general_url, settings.general_model,
            key_env=settings.general_key_env,
        )
    elif need_general:
        raise ConfigError("no general provider configured")

    if settings.embedder != "token-overlap":
        raise ConfigError(f"unknown embedder {settings.embedder!r}")

    def factory():
        specialized = (
            ScriptedLlm(spec_entries) if spec_entries is not None else spec_http
        )
        general = ScriptedLlm(gen_entries) if gen_entries is not None else gen_http
        return specialized, general, TokenOverlapEmbedder()

    return factory
