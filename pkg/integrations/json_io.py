from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from business.gibbs import GibbsSpec
from business.validators import ConfigError, ValidationError


@dataclass(frozen=True)
class ConfigDocument:
    """A parsed JSON config that remembers where each key was written."""

    data: dict
    text: str
    source: str

    def line_of(self, key: str) -> int | None:
        match = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        if match is None:
            return None
        return self.text.count("\n", 0, match.start()) + 1


def parse_config(text: str, source: str = "<config>") -> ConfigDocument:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno, source=source) from e
    if not isinstance(data, dict):
        raise ConfigError("the config must be a JSON object", line=1, source=source)
    return ConfigDocument(data, text, source)


def load_config(path: str | Path) -> ConfigDocument:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file not found", source=str(path))
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def read_gibbs_spec(path: str | Path) -> GibbsSpec:
    doc = load_config(path)
    try:
        return GibbsSpec.from_dict(doc.data)
    except (ValidationError, ValueError, TypeError) as e:
        key = next((k for k in ("psi", "lambda", "alphabet") if k in str(e)), None)
        raise ConfigError(str(e), line=doc.line_of(key) if key else None, source=doc.source) from e


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return value.as_posix()
    return value


def dumps(data: dict) -> str:
    """Stable text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_plain(data), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path: str | Path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data), encoding="utf-8")
    return path
