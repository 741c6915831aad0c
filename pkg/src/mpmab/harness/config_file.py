from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path

from pydantic import ValidationError

from mpmab.errors import ConfigError
from mpmab.harness.experiment import ExperimentConfig
from mpmab.strategy.schedule import ScheduleConstants

# key in a config file / CLI flag name -> ExperimentConfig field
_FIELD_FOR_KEY = {
    "k": "k",
    "m": "m",
    "T": "horizon",
    "deltas": "deltas",
    "trials": "trials",
    "seed": "shared_seed",
    "private_seed": "private_seed_base",
    "feedback": "feedback",
    "adversary": "adversary",
    "algorithm": "algorithm",
    "means": "means",
}
_CONST_KEYS = {"c_eps": "c_eps", "c_t0": "c_t0", "paper_constants": "paper_mode"}
_LIST_KEYS = {"deltas", "means", "gaps"}

# read by the sweep / obstruction commands rather than by ExperimentConfig
RUN_KEYS = {"gaps", "instances_per_gap", "workers", "out"}
KNOWN_KEYS = set(_FIELD_FOR_KEY) | set(_CONST_KEYS) | RUN_KEYS


def parse_config_text(text: str, source: str = "<text>") -> dict[str, object]:
    """
    One `key=value` per line; blank lines and `#` comments are ignored.
    List values (deltas, means, gaps) are comma separated.
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key in _LIST_KEYS:
            try:
                values[key] = tuple(float(tok) for tok in value.split(",") if tok.strip())
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: {key} must be a comma separated list of numbers") from exc
        else:
            values[key] = value
    return values


def load_config_file(path: Path) -> dict[str, object]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def build_config(values: Mapping[str, object]) -> ExperimentConfig:
    """Turn file / flag values (keys as in a config file, None = unset) into an ExperimentConfig."""
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    fields = {_FIELD_FOR_KEY[k]: v for k, v in values.items() if k in _FIELD_FOR_KEY and v is not None}
    consts = {_CONST_KEYS[k]: v for k, v in values.items() if k in _CONST_KEYS and v is not None}
    try:
        if consts:
            fields["consts"] = ScheduleConstants(**consts)
        return ExperimentConfig(**fields)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment configuration:\n{exc}") from exc
