"""Scalar values: kind detection, compatibility, ordering and payload sizes.

Values are plain Python objects: ``int`` (integer), ``float``, ``str``
(text), ``datetime.date``, ``bool`` and ``None`` (null).
"""

from __future__ import annotations

import datetime
import re
from functools import lru_cache
from typing import Any, Iterable, Sequence

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

FIXED_WIDTH = 8
NULL_WIDTH = 1


def kind_of(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "text"
    if isinstance(value, datetime.date) and not isinstance(value, datetime.datetime):
        return "date"
    raise TypeError(f"unsupported value {value!r}")


def is_numeric(kind: str) -> bool:
    return kind in ("integer", "float")


def comparable(a: str, b: str) -> bool:
    """Whether values of kinds ``a`` and ``b`` may be compared."""
    return a == b or (is_numeric(a) and is_numeric(b))


def fits_field(value: Any, field_kind: str) -> bool:
    """Whether a non-null value may be stored in a field of ``field_kind``."""
    try:
        k = kind_of(value)
    except TypeError:
        return False
    if k == "integer" and field_kind == "integer":
        return INT64_MIN <= value <= INT64_MAX
    if field_kind == "float":
        return k in ("float", "integer")
    return k == field_kind


def coerce_for_field(value: Any, field_kind: str) -> Any:
    if value is not None and field_kind == "float":
        return float(value)
    return value


def payload_size(values: Iterable[Any]) -> int:
    """Serialized size: 8 bytes per fixed-width scalar, UTF-8 length per text, 1 per null."""
    total = 0
    for v in values:
        if v is None:
            total += NULL_WIDTH
        elif isinstance(v, str):
            total += len(v.encode("utf-8"))
        else:
            total += FIXED_WIDTH
    return total


@lru_cache(maxsize=512)
def _like_regex(pattern: str) -> re.Pattern:
    parts = []
    for ch in pattern:
        if ch == "%":
            parts.append(".*")
        elif ch == "_":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.DOTALL)


def like(value: str, pattern: str) -> bool:
    """Case-sensitive SQL LIKE with ``%`` and ``_`` wildcards."""
    return _like_regex(pattern).fullmatch(value) is not None


def compare(op: str, left: Any, right: Any) -> bool:
    """Two-valued comparison: anything compared against null is false."""
    if left is None or right is None:
        return False
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "LIKE":
        return like(left, right)
    raise ValueError(op)


def sort_rows(rows: list, keys: Sequence[tuple[int, bool]]) -> list:
    """Stable multi-key sort. ``keys`` is a list of (column index, descending).

    Nulls sort first ascending and last descending.
    """
    out = list(rows)
    for index, descending in reversed(keys):
        out.sort(
            key=lambda r, i=index: (r[i] is not None, 0 if r[i] is None else r[i]),
            reverse=descending,
        )
    return out


def to_json(value: Any) -> Any:
    if isinstance(value, datetime.date):
        return value.isoformat()
    return value


def from_json(value: Any, field_kind: str) -> Any:
    """Decode a JSON scalar for a field of ``field_kind`` (dates arrive as ISO strings)."""
    if field_kind == "date" and isinstance(value, str):
        try:
            return datetime.date.fromisoformat(value)
        except ValueError:
            return value
    if field_kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value
