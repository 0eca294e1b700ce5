from __future__ import annotations

from pathlib import Path

from models import InvalidArgumentError


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key=value` lines; `#` starts a comment, keys accept `-` or `_`."""
    source = Path(path)
    if not source.exists():
        raise InvalidArgumentError(f"Config file does not exist: {source}")

    values: dict[str, str] = {}
    for line_number, raw in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, separator, value = line.partition("=")
        if not separator or not key.strip():
            raise InvalidArgumentError(f"Invalid config line {line_number} in {source}: expected key=value.")
        values[normalize_key(key)] = value.strip()
    return values
