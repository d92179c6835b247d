"""Plain-text experiment configuration.

Format: one ``key value...`` pair per line, ``#`` comments, blank lines
ignored.  Dotted keys form a tree (``lattice.points 401``); list-valued
keys take whitespace-separated entries.  Every config must carry
``units natural`` (all physical quantities in natural units), and keys
not declared in the command schema are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

__all__ = ["ConfigError", "Field", "parse_config", "validate"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    typ: str                 # int | float | str | float-list | int-list
    required: bool = False
    default: Any = None


def parse_config(text: str) -> dict[str, list[str]]:
    """Raw key -> token-list mapping; duplicate keys are an error."""
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        key, vals = toks[0], toks[1:]
        if not vals:
            raise ConfigError(f"line {lineno}: key '{key}' has no value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        out[key] = vals
    return out


def _convert(key: str, vals: list[str], typ: str):
    try:
        if typ == "int":
            (v,) = vals
            return int(v)
        if typ == "float":
            (v,) = vals
            return float(v)
        if typ == "str":
            (v,) = vals
            return v
        if typ == "float-list":
            return [float(v) for v in vals]
        if typ == "int-list":
            return [int(v) for v in vals]
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse {vals!r} as {typ}") from exc
    raise ConfigError(f"key '{key}': unknown schema type {typ!r}")


def validate(raw: dict[str, list[str]], schema: dict[str, Field]) -> dict[str, Any]:
    """Check the raw mapping against a schema and apply defaults.

    The ``units`` key is implicitly required everywhere and must be
    'natural'.
    """
    schema = dict(schema)
    schema.setdefault("units", Field("str", required=True))
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")
    out: dict[str, Any] = {}
    for key, spec in schema.items():
        if key in raw:
            out[key] = _convert(key, raw[key], spec.typ)
        elif spec.required:
            raise ConfigError(f"missing required config key '{key}'")
        else:
            out[key] = spec.default
    if out.get("units") != "natural":
        raise ConfigError("config key 'units' must be set to 'natural'")
    return out
