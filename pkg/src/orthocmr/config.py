"""Run configuration: loading, validation errors, canonical hashing.

Configs are plain nested mappings read from YAML (JSON parses too, being a
YAML subset).  Validation failures raise ConfigError carrying the dotted path
of the offending field, which the CLI surfaces verbatim with exit code 2.

The config hash is the first 12 hex chars of the SHA-256 of the canonical
JSON serialisation (sorted keys, compact separators).  Every artifact embeds
it so outputs can be traced back to the exact configuration that made them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import numpy as np
import yaml


class ConfigError(ValueError):
    """Invalid configuration; message starts with the dotted field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(field, message)


def load_config(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        payload = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"could not parse {path}: {exc}") from exc
    if payload is None:
        payload = {}
    require(isinstance(payload, dict), "config", f"top level must be a mapping, got {type(payload).__name__}")
    return payload


def jsonify(value: Any) -> Any:
    """Recursively convert to plain JSON-serialisable Python types."""
    if isinstance(value, dict):
        return {str(k): jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return jsonify(dataclasses.asdict(value))
    if isinstance(value, float) and value != value:  # NaN -> null for valid JSON
        return None
    return value


def canonical_json(payload: Any) -> str:
    return json.dumps(jsonify(payload), sort_keys=True, separators=(",", ":"))


def config_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:12]


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """Write via a same-directory temp file and rename, so readers never see
    a half-written artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: Union[str, Path], payload: Any) -> None:
    atomic_write_text(path, json.dumps(jsonify(payload), indent=2, sort_keys=True) + "\n")
