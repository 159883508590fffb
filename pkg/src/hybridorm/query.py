"""Structured requests (filters, sorts, pagination) and SQL statement generation.

The dialect: uppercase keywords, bare identifiers, positional ``?``
placeholders. Every user value travels in ``Statement.params``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .errors import (
    EmptyChanges,
    MissingField,
    PrimaryKeyUpdate,
    TypeMismatch,
    UnknownEntity,
    UnknownField,
)
from .schema import EntityDescriptor, SchemaRegistry
from .values import comparable, fits_field, kind_of

OPERATORS = {"eq": "=", "neq": "<>", "lt": "<", "le": "<=", "gt": ">", "ge": ">=", "like": "LIKE"}


@dataclass(frozen=True)
class Comparison:
    field: str
    op: str
    literal: Any


@dataclass(frozen=True)
class And:
    items: tuple = ()

    def __init__(self, items=()):
        object.__setattr__(self, "items", tuple(items))


@dataclass(frozen=True)
class Or:
    items: tuple = ()

    def __init__(self, items=()):
        object.__setattr__(self, "items", tuple(items))


@dataclass(frozen=True)
class Not:
    child: Any


@dataclass(frozen=True)
class TrueFilter:
    def __repr__(self):
        return "TRUE"


TRUE = TrueFilter()

FilterExpr = Union[Comparison, And, Or, Not, TrueFilter]


def eq(field, value):
    return Comparison(field, "eq", value)


def neq(field, value):
    return Comparison(field, "neq", value)


def lt(field, value):
    return Comparison(field, "lt", value)


def le(field, value):
    return Comparison(field, "le", value)


def gt(field, value):
    return Comparison(field, "gt", value)


def ge(field, value):
    return Comparison(field, "ge", value)


def like(field, pattern):
    return Comparison(field, "like", pattern)


@dataclass(frozen=True)
class SortSpec:
    field: str
    direction: str = "asc"


@dataclass(frozen=True)
class QueryOptions:
    filter: Any = TRUE
    sorts: tuple = ()
    limit: int | None = None
    offset: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sorts", tuple(self.sorts))
        for name in ("limit", "offset"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")


@dataclass(frozen=True)
class Statement:
    text: str
    params: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))


def _entity(registry: SchemaRegistry, name: str) -> EntityDescriptor:
    try:
        return registry.entities[name]
    except KeyError:
        raise UnknownEntity(name) from None


def _field(entity: EntityDescriptor, name: str):
    f = entity.field(name)
    if f is None:
        raise UnknownField(f"{entity.name}.{name}")
    return f


def _render(entity: EntityDescriptor, node, params: list, nested: bool) -> str:
    if isinstance(node, TrueFilter):
        return "(1=1)" if nested else ""
    if isinstance(node, Comparison):
        f = _field(entity, node.field)
        if node.op not in OPERATORS:
            raise ValueError(f"unknown operator {node.op!r}")
        if node.literal is None:
            if node.op == "eq":
                return f"{f.name} IS NULL"
            if node.op == "neq":
                return f"{f.name} IS NOT NULL"
            raise TypeMismatch(f"{f.name}: {node.op} against null")
        try:
            lit_kind = kind_of(node.literal)
        except TypeError:
            raise TypeMismatch(f"{f.name}: unsupported literal {node.literal!r}") from None
        if node.op == "like":
            if f.value_kind != "text" or lit_kind != "text":
                raise TypeMismatch(f"{f.name}: like needs a text field and pattern")
        elif not comparable(f.value_kind, lit_kind):
            raise TypeMismatch(f"{f.name}: {f.value_kind} compared with {lit_kind}")
        params.append(node.literal)
        return f"{f.name} {OPERATORS[node.op]} ?"
    if isinstance(node, (And, Or)):
        joiner = " AND " if isinstance(node, And) else " OR "
        if not node.items:
            return "(1=1)" if isinstance(node, And) else "(1=0)"
        return "(" + joiner.join(_render(entity, c, params, True) for c in node.items) + ")"
    if isinstance(node, Not):
        return f"(NOT {_render(entity, node.child, params, True)})"
    raise TypeError(f"not a filter expression: {node!r}")


def render_filter(entity: EntityDescriptor, filter: FilterExpr) -> tuple[str, list]:
    """Render a filter tree; ``TRUE`` at the top level renders as an empty clause."""
    params: list = []
    return _render(entity, filter, params, False), params


def _where(entity, filter, params: list) -> str:
    clause, p = render_filter(entity, filter)
    params.extend(p)
    return f" WHERE {clause}" if clause else ""


def build_select(registry: SchemaRegistry, entity: str, options: QueryOptions = QueryOptions()) -> Statement:
    ent = _entity(registry, entity)
    params: list = []
    text = f"SELECT {', '.join(ent.field_names)} FROM {ent.name}"
    text += _where(ent, options.filter, params)
    if options.sorts:
        parts = []
        for s in options.sorts:
            f = _field(ent, s.field)
            if s.direction not in ("asc", "desc"):
                raise ValueError(f"bad sort direction {s.direction!r}")
            parts.append(f"{f.name} {s.direction.upper()}")
        text += " ORDER BY " + ", ".join(parts)
    if options.limit is not None:
        text += " LIMIT ?"
        params.append(options.limit)
    if options.offset is not None:
        text += " OFFSET ?"
        params.append(options.offset)
    return Statement(text, params)


def _check_value(f, value):
    if value is None:
        if not f.nullable:
            raise TypeMismatch(f"{f.name}: null in a non-nullable field")
        return
    if not fits_field(value, f.value_kind):
        raise TypeMismatch(f"{f.name}: {value!r} is not a valid {f.value_kind}")


def build_insert(registry: SchemaRegistry, entity: str, record) -> Statement:
    """``record`` is a Record or a plain field->value mapping."""
    ent = _entity(registry, entity)
    values: Mapping[str, Any] = record if isinstance(record, Mapping) else record.values
    for name in values:
        _field(ent, name)
    for f in ent.fields:
        if not f.nullable and f.name not in values:
            raise MissingField(f"{ent.name}.{f.name}")
    names, params = [], []
    for f in ent.fields:
        if f.name in values:
            _check_value(f, values[f.name])
            names.append(f.name)
            params.append(values[f.name])
    placeholders = ", ".join("?" for _ in names)
    return Statement(f"INSERT INTO {ent.name} ({', '.join(names)}) VALUES ({placeholders})", params)


def build_update(registry: SchemaRegistry, entity: str, changes: Mapping[str, Any], filter: FilterExpr = TRUE) -> Statement:
    ent = _entity(registry, entity)
    if not changes:
        raise EmptyChanges(ent.name)
    for name in changes:
        _field(ent, name)
    if ent.primary_key.name in changes:
        raise PrimaryKeyUpdate(f"{ent.name}.{ent.primary_key.name}")
    sets, params = [], []
    for f in ent.fields:
        if f.name in changes:
            _check_value(f, changes[f.name])
            sets.append(f"{f.name} = ?")
            params.append(changes[f.name])
    text = f"UPDATE {ent.name} SET {', '.join(sets)}"
    text += _where(ent, filter, params)
    return Statement(text, params)


def build_delete(registry: SchemaRegistry, entity: str, filter: FilterExpr = TRUE) -> Statement:
    ent = _entity(registry, entity)
    params: list = []
    text = f"DELETE FROM {ent.name}" + _where(ent, filter, params)
    return Statement(text, params)


# -- JSON form used by workload scripts -------------------------------------

def filter_from_json(doc) -> FilterExpr:
    """Decode ``true``, ``{"and": [...]}``, ``{"or": [...]}``, ``{"not": f}``
    or ``{"<op>": [field, value]}``. Values are decoded later against the schema."""
    if doc is True or doc is None:
        return TRUE
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError(f"bad filter {doc!r}")
    (key, arg), = doc.items()
    if key in ("and", "or"):
        if not isinstance(arg, list):
            raise ValueError(f"{key} needs a list")
        items = [filter_from_json(a) for a in arg]
        return And(items) if key == "and" else Or(items)
    if key == "not":
        return Not(filter_from_json(arg))
    if key in OPERATORS:
        if not isinstance(arg, list) or len(arg) != 2 or not isinstance(arg[0], str):
            raise ValueError(f"{key} needs [field, value]")
        return Comparison(arg[0], key, arg[1])
    raise ValueError(f"unknown filter operator {key!r}")


def map_literals(node, fn) -> FilterExpr:
    """Rebuild a filter with ``fn(field, literal)`` applied to every comparison literal."""
    if isinstance(node, Comparison):
        return Comparison(node.field, node.op, fn(node.field, node.literal))
    if isinstance(node, And):
        return And(map_literals(c, fn) for c in node.items)
    if isinstance(node, Or):
        return Or(map_literals(c, fn) for c in node.items)
    if isinstance(node, Not):
        return Not(map_literals(node.child, fn))
    return node
