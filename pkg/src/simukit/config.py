"""Layered settings: key=value file, then environment, then command-line flags."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .orchestrator.fsm import Limits

ENV_KEYS = {
    "kb": "SIMUKIT_KB",
    "matlab": "SIMUKIT_MATLAB",
    "endpoint": "SIMUKIT_ENDPOINT",
}
CONFIG_ENV = "SIMUKIT_CONFIG"


@dataclass(frozen=True)
class Config:
    kb: str | None = None
    matlab: str = "matlab"
    endpoint: str | None = None
    model: str | None = None
    role_models: dict = field(default_factory=dict)
    api_key: str | None = None
    max_review: int = 3
    max_build: int = 5
    timeout: float = 600.0
    temp_dir: str | None = None
    format: str = "text"

    @property
    def limits(self) -> Limits:
        return Limits(self.max_review, self.max_build)

    def validate(self) -> Config:
        if self.kb is not None and not os.path.isfile(self.kb):
            raise ConfigError(f"KB file {self.kb!r} does not exist")
        if self.temp_dir is not None and not os.path.isdir(self.temp_dir):
            raise ConfigError(f"temp dir {self.temp_dir!r} does not exist")
        if self.format not in ("text", "json"):
            raise ConfigError(f"format must be text or json, not {self.format!r}")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        try:
            self.limits
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


_INT_KEYS = {"max_review", "max_build"}
_FLOAT_KEYS = {"timeout"}


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {value!r}") from None
    return value


def parse_config_text(text: str, base_dir: str = ".") -> dict:
    """``key = value`` lines; ``#`` starts a comment; ``model.<Role>`` sets per-role models."""
    known = {f.name for f in fields(Config)} - {"role_models"}
    out: dict = {}
    roles: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"config line {n}: expected key = value")
        if key.startswith("model."):
            roles[key[len("model.") :]] = value
            continue
        if key not in known:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        if key in ("kb", "temp_dir") or (key == "matlab" and os.sep in value):
            value = os.path.join(base_dir, value)
        out[key] = _coerce(key, value)
    if roles:
        out["role_models"] = roles
    return out


def load_config(path: str | None = None, env=None, overrides: dict | None = None) -> Config:
    env = os.environ if env is None else env
    values: dict = {}
    path = path or env.get(CONFIG_ENV)
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path!r} does not exist")
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), os.path.dirname(os.path.abspath(path))))
    for key, var in ENV_KEYS.items():
        if env.get(var):
            values[key] = env[var]
    if env.get("SIMUKIT_API_KEY"):
        values["api_key"] = env["SIMUKIT_API_KEY"]
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return replace(Config(), **values).validate()
