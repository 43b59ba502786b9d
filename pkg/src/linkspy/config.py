"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Values stay strings here; the
consumers coerce them with :func:`get_int` / :func:`get_float` so that errors
name the key that failed.
"""

from pathlib import Path

from .errors import ConfigError


def parse_config(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}", "empty key")
        values[key] = value
    return values


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    return parse_config(path.read_text(), source=str(path))


def get_int(values, key, default):
    if key not in values:
        return default
    raw = values[key]
    try:
        return int(raw)
    except (TypeError, ValueError):
        pass
    try:
        as_float = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not an integer: {raw!r}") from None
    if not as_float.is_integer():
        raise ConfigError(key, f"not an integer: {raw!r}")
    return int(as_float)


def get_float(values, key, default):
    if key not in values:
        return default
    raw = values[key]
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not a number: {raw!r}") from None


def get_str(values, key, default):
    return values.get(key, default)


def parse_pairs(raw, key="link_pairs"):
    """Parse ``"0-1, 2-3"`` into ``[(0, 1), (2, 3)]``."""
    pairs = []
    for chunk in raw.replace(";", ",").split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            a, b = (int(x) for x in chunk.split("-"))
        except ValueError:
            raise ConfigError(key, f"bad GPU pair {chunk!r}, expected 'a-b'") from None
        pairs.append((a, b))
    return pairs
