"""Flat dotted-key configuration.

Config files are TOML restricted to scalar and list values; nested tables
and dotted keys are both accepted and flattened to ``section.key`` names.
Every subcommand declares its keys with defaults (``REQUIRED`` for keys
without one); unknown keys, missing required keys and type mismatches raise
:class:`ConfigError` naming the offending key path.
"""

import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


REQUIRED = object()


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, name + "."))
        else:
            out[name] = v
    return out


def load_file(path) -> tuple:
    """Return ``(flat_config, seed_or_None)``.

    ``.json`` files are treated as run manifests (their ``config`` and
    ``seed`` entries are reused); anything else is parsed as TOML.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError("--config", f"cannot read {path}: {err.strerror}") from None
    if path.endswith(".json"):
        try:
            man = json.loads(raw.decode("utf-8"))
        except ValueError as err:
            raise ConfigError("--config", f"malformed manifest: {err}") from None
        if not isinstance(man, dict) or "config" not in man:
            raise ConfigError("config", "manifest has no config section")
        return dict(man["config"]), man.get("seed")
    try:
        tree = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ConfigError("--config", f"malformed config: {err}") from None
    return flatten(tree), None


def _coerce(key: str, default, value):
    if default is REQUIRED or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        if default and isinstance(default[0], float):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ConfigError(key, "expected a list of numbers")
            return [float(v) for v in value]
        if default and isinstance(default[0], int):
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ConfigError(key, "expected a list of integers")
        return list(value)
    return value


def resolve(schema: dict, given: dict) -> dict:
    """Merge ``given`` into the defaults of ``schema`` with validation."""
    for k in sorted(given):
        if k not in schema:
            raise ConfigError(k, "unknown key")
    out = {}
    for k in sorted(schema):
        default = schema[k]
        if k in given:
            out[k] = _coerce(k, default, given[k])
        elif default is REQUIRED:
            raise ConfigError(k, "missing required key")
        else:
            out[k] = default
    return out
