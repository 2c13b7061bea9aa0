"""Flat ``key=value`` text files used for configs, records and run manifests."""
from __future__ import annotations

import dataclasses
import typing
from typing import Any, Mapping

from .instance import ParseError


def parse_kv(text: str) -> dict[str, tuple[str, int]]:
    """Map each key to ``(raw value, line number)``.  ``#`` starts a comment."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected key=value, got {body!r}", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ParseError("empty key", lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", lineno)
        out[key] = (value, lineno)
    return out


def format_kv(record: Mapping[str, Any]) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in record.items())


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def coerce(value: str, kind: type, key: str, lineno: int = 0) -> Any:
    try:
        if kind is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value
    except ValueError:
        raise ParseError(f"{key}: cannot read {value!r} as {kind.__name__}", lineno) from None


def dataclass_from_kv(cls, values: Mapping[str, tuple[str, int]], base=None):
    """Build ``cls`` (a dataclass with scalar fields) from parsed key/values.

    Keys that are not fields of ``cls`` are ignored so one file can feed
    several configs.
    """
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            raw, lineno = values[f.name]
            kind = hints[f.name]
            kwargs[f.name] = coerce(raw, kind if kind in (bool, int, float, str) else str,
                                    f.name, lineno)
    if base is not None:
        return dataclasses.replace(base, **kwargs)
    return cls(**kwargs)
