"""Store connections and statement execution.

The embedded store keeps each table as an insertion-ordered list of row
tuples and interprets the statement dialect produced by
:mod:`hybridorm.query` directly. External stores are descriptor-only.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

from .errors import (
    ClosedStore,
    ConstraintViolation,
    MalformedStatement,
    TypeMismatch,
    UnknownLocation,
    UnknownTableOrField,
    UnsupportedStoreKind,
)
from .query import Statement
from .schema import EntityDescriptor, SchemaRegistry
from .values import coerce_for_field, comparable, compare, fits_field, kind_of, payload_size, sort_rows, to_json

# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>-?\d+(?:\.\d+)?)
      | (?P<str>'(?:[^']|'')*')
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op><=|>=|<>|!=|=|<|>)
      | (?P<punct>[(),*?])
    )""",
    re.VERBOSE,
)

KEYWORDS = {
    "SELECT", "FROM", "WHERE", "ORDER", "BY", "ASC", "DESC", "LIMIT", "OFFSET",
    "INSERT", "INTO", "VALUES", "UPDATE", "SET", "DELETE", "AND", "OR", "NOT",
    "IS", "NULL", "LIKE", "TRUE", "FALSE",
}


def _tokenize(text: str) -> list[tuple[str, Any]]:
    tokens, pos = [], 0
    text = text.rstrip().rstrip(";")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise MalformedStatement(f"unexpected input at {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        raw = m.group(kind)
        if kind == "num":
            tokens.append(("lit", float(raw) if "." in raw else int(raw)))
        elif kind == "str":
            tokens.append(("lit", raw[1:-1].replace("''", "'")))
        elif kind == "word":
            up = raw.upper()
            if up in KEYWORDS:
                tokens.append(("kw", up))
            else:
                tokens.append(("ident", raw))
        elif kind == "op":
            tokens.append(("op", "<>" if raw == "!=" else raw))
        else:
            tokens.append(("p", raw))
    return tokens


# -- parsed forms -----------------------------------------------------------
# Operands: ("col", name) | ("param", index) | ("lit", value)
# Conditions: ("cmp", op, a, b) | ("isnull", operand, negated)
#             | ("and", [..]) | ("or", [..]) | ("not", c)


@dataclass
class Select:
    table: str
    columns: list | None  # None means *
    where: Any
    order: list
    limit: Any
    offset: Any


@dataclass
class Insert:
    table: str
    columns: list
    values: list


@dataclass
class Update:
    table: str
    sets: list
    where: Any


@dataclass
class Delete:
    table: str
    where: Any


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_params = 0

    def peek(self, kind=None, value=None):
        if self.i >= len(self.tokens):
            return None
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            return None
        if value is not None and tok[1] != value:
            return None
        return tok

    def take(self, kind=None, value=None):
        tok = self.peek(kind, value)
        if tok is None:
            got = self.tokens[self.i] if self.i < len(self.tokens) else "end of statement"
            raise MalformedStatement(f"expected {value or kind}, got {got}")
        self.i += 1
        return tok

    def accept(self, kind, value=None):
        tok = self.peek(kind, value)
        if tok is not None:
            self.i += 1
        return tok

    def ident(self):
        return self.take("ident")[1]

    def operand(self):
        if self.accept("p", "?"):
            self.n_params += 1
            return ("param", self.n_params - 1)
        tok = self.peek()
        if tok is None:
            raise MalformedStatement("expected operand")
        if tok[0] == "lit":
            self.i += 1
            return ("lit", tok[1])
        if tok[0] == "kw" and tok[1] in ("TRUE", "FALSE", "NULL"):
            self.i += 1
            return ("lit", {"TRUE": True, "FALSE": False, "NULL": None}[tok[1]])
        return ("col", self.ident())

    def parse(self):
        head = self.take("kw")[1]
        if head == "SELECT":
            stmt = self.select()
        elif head == "INSERT":
            stmt = self.insert()
        elif head == "UPDATE":
            stmt = self.update()
        elif head == "DELETE":
            self.take("kw", "FROM")
            stmt = Delete(self.ident(), self.where())
        else:
            raise MalformedStatement(f"unsupported statement {head}")
        if self.i != len(self.tokens):
            raise MalformedStatement(f"trailing input {self.tokens[self.i]}")
        return stmt

    def select(self):
        if self.accept("p", "*"):
            columns = None
        else:
            columns = [self.ident()]
            while self.accept("p", ","):
                columns.append(self.ident())
        self.take("kw", "FROM")
        table = self.ident()
        where = self.where()
        order = []
        if self.accept("kw", "ORDER"):
            self.take("kw", "BY")
            while True:
                col = self.ident()
                desc = False
                if self.accept("kw", "DESC"):
                    desc = True
                else:
                    self.accept("kw", "ASC")
                order.append((col, desc))
                if not self.accept("p", ","):
                    break
        limit = offset = None
        if self.accept("kw", "LIMIT"):
            limit = self.operand()
        if self.accept("kw", "OFFSET"):
            offset = self.operand()
        return Select(table, columns, where, order, limit, offset)

    def insert(self):
        self.take("kw", "INTO")
        table = self.ident()
        self.take("p", "(")
        columns = [self.ident()]
        while self.accept("p", ","):
            columns.append(self.ident())
        self.take("p", ")")
        self.take("kw", "VALUES")
        self.take("p", "(")
        values = [self.operand()]
        while self.accept("p", ","):
            values.append(self.operand())
        self.take("p", ")")
        if len(values) != len(columns):
            raise MalformedStatement("column and value counts differ")
        return Insert(table, columns, values)

    def update(self):
        table = self.ident()
        self.take("kw", "SET")
        sets = []
        while True:
            col = self.ident()
            self.take("op", "=")
            sets.append((col, self.operand()))
            if not self.accept("p", ","):
                break
        return Update(table, sets, self.where())

    def where(self):
        if self.accept("kw", "WHERE"):
            return self.or_expr()
        return None

    def or_expr(self):
        items = [self.and_expr()]
        while self.accept("kw", "OR"):
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else ("or", items)

    def and_expr(self):
        items = [self.not_expr()]
        while self.accept("kw", "AND"):
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else ("and", items)

    def not_expr(self):
        if self.accept("kw", "NOT"):
            return ("not", self.not_expr())
        if self.accept("p", "("):
            inner = self.or_expr()
            self.take("p", ")")
            return inner
        left = self.operand()
        if self.accept("kw", "IS"):
            negated = bool(self.accept("kw", "NOT"))
            self.take("kw", "NULL")
            return ("isnull", left, negated)
        if self.accept("kw", "LIKE"):
            return ("cmp", "LIKE", left, self.operand())
        op = self.take("op")[1]
        return ("cmp", op, left, self.operand())


_PARSE_CACHE: dict[str, tuple[Any, int]] = {}


def parse_statement(text: str):
    """Parse dialect text; returns (statement tree, placeholder count)."""
    cached = _PARSE_CACHE.get(text)
    if cached is None:
        p = _Parser(text)
        cached = (p.parse(), p.n_params)
        if len(_PARSE_CACHE) < 4096:
            _PARSE_CACHE[text] = cached
    return cached


# -- store handles ----------------------------------------------------------

class Measurement(NamedTuple):
    result: Any
    latency: float
    payload: int


class StoreHandle:
    """An open embedded store. Operations on one handle are serialized by a lock."""

    def __init__(self, registry: SchemaRegistry, location: str, injected_delay: float = 0.0,
                 wall_clock: bool = True):
        self.registry = registry
        self.location = location
        self.injected_delay = float(injected_delay)
        self.wall_clock = wall_clock
        self.tables: dict[str, list[tuple]] = {name: [] for name in registry.entities}
        self.state = "open"
        self._lock = threading.RLock()

    def __repr__(self):
        sizes = {k: len(v) for k, v in self.tables.items()}
        return f"StoreHandle({self.location!r}, {self.state}, {sizes})"

    def close(self):
        self.state = "closed"

    def execute(self, statement: Statement):
        return execute(self, statement)

    def execute_raw(self, text: str, params: Sequence[Any] = ()):
        return execute_raw(self, text, params)

    def digest(self) -> str:
        """SHA-256 over the table contents, for byte-identity comparisons."""
        with self._lock:
            blob = repr(sorted((k, [tuple(map(repr, r)) for r in v]) for k, v in self.tables.items()))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def dump_json(self) -> str:
        """Debugging dump of every table."""
        with self._lock:
            doc = {
                name: [dict(zip(self.registry.entities[name].field_names, map(to_json, row))) for row in rows]
                for name, rows in self.tables.items()
            }
        return json.dumps({"location": self.location, "tables": doc}, indent=2, default=str)


def open_store(registry: SchemaRegistry, location: str, injected_delay: float = 0.0,
               wall_clock: bool = True) -> StoreHandle:
    try:
        desc = registry.stores[location]
    except KeyError:
        raise UnknownLocation(location) from None
    if desc.kind != "embedded":
        raise UnsupportedStoreKind(f"{location}: {desc.kind} stores have no driver")
    return StoreHandle(registry, location, injected_delay, wall_clock)


def _table(handle: StoreHandle, name: str) -> tuple[EntityDescriptor, list]:
    ent = handle.registry.entities.get(name)
    if ent is None or name not in handle.tables:
        raise UnknownTableOrField(f"no table {name!r}")
    return ent, handle.tables[name]


def _kind(ent: EntityDescriptor, operand, params) -> str:
    tag, x = operand
    if tag == "col":
        f = ent.field(x)
        if f is None:
            raise UnknownTableOrField(f"no field {ent.name}.{x}")
        return f.value_kind
    value = params[x] if tag == "param" else x
    try:
        return kind_of(value)
    except TypeError:
        raise TypeMismatch(f"unsupported value {value!r}") from None


def _check_cond(ent, cond, params):
    """Resolve fields and reject ill-typed comparisons before touching any row."""
    if cond is None:
        return
    tag = cond[0]
    if tag in ("and", "or"):
        for c in cond[1]:
            _check_cond(ent, c, params)
    elif tag == "not":
        _check_cond(ent, cond[1], params)
    elif tag == "isnull":
        _kind(ent, cond[1], params)
    else:
        _, op, a, b = cond
        ka, kb = _kind(ent, a, params), _kind(ent, b, params)
        if "null" in (ka, kb):
            return
        if op == "LIKE":
            if ka != "text" or kb != "text":
                raise TypeMismatch("LIKE needs text operands")
        elif not comparable(ka, kb):
            raise TypeMismatch(f"cannot compare {ka} with {kb}")


def _compile_cond(ent, cond, params):
    """Turn a condition tree into a predicate over row tuples."""
    if cond is None:
        return lambda row: True
    tag = cond[0]
    if tag == "and":
        preds = [_compile_cond(ent, c, params) for c in cond[1]]
        return lambda row: all(p(row) for p in preds)
    if tag == "or":
        preds = [_compile_cond(ent, c, params) for c in cond[1]]
        return lambda row: any(p(row) for p in preds)
    if tag == "not":
        pred = _compile_cond(ent, cond[1], params)
        return lambda row: not pred(row)

    def getter(operand):
        t, x = operand
        if t == "col":
            i = ent.index_of(x)
            return lambda row: row[i]
        v = params[x] if t == "param" else x
        return lambda row: v

    if tag == "isnull":
        get, negated = getter(cond[1]), cond[2]
        return lambda row: (get(row) is not None) if negated else (get(row) is None)
    _, op, a, b = cond
    ga, gb = getter(a), getter(b)
    return lambda row: compare(op, ga(row), gb(row))


def _value(operand, params):
    tag, x = operand
    if tag == "param":
        return params[x]
    if tag == "lit":
        return x
    raise MalformedStatement(f"column {x!r} where a value is expected")


def _count(operand, params, what):
    if operand is None:
        return None
    v = _value(operand, params)
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise MalformedStatement(f"{what} must be a non-negative integer")
    return v


def _store_value(ent, f, value):
    if value is None:
        if not f.nullable:
            raise ConstraintViolation(f"{ent.name}.{f.name} may not be null")
        return None
    if not fits_field(value, f.value_kind):
        raise TypeMismatch(f"{ent.name}.{f.name}: {value!r} is not a valid {f.value_kind}")
    return coerce_for_field(value, f.value_kind)


def _run(handle: StoreHandle, text: str, params: Sequence[Any]):
    if handle.state != "open":
        raise ClosedStore(handle.location)
    stmt, n_params = parse_statement(text)
    params = list(params)
    if n_params != len(params):
        raise MalformedStatement(f"{n_params} placeholders but {len(params)} params")
    ent, rows = _table(handle, stmt.table)
    pk_index = ent.index_of(ent.primary_key.name)

    if isinstance(stmt, Select):
        _check_cond(ent, stmt.where, params)
        if stmt.columns is None:
            proj = list(range(len(ent.fields)))
        else:
            for c in stmt.columns:
                if ent.field(c) is None:
                    raise UnknownTableOrField(f"no field {ent.name}.{c}")
            proj = [ent.index_of(c) for c in stmt.columns]
        keys = []
        for col, desc in stmt.order:
            if ent.field(col) is None:
                raise UnknownTableOrField(f"no field {ent.name}.{col}")
            keys.append((ent.index_of(col), desc))
        limit = _count(stmt.limit, params, "LIMIT")
        offset = _count(stmt.offset, params, "OFFSET") or 0
        pred = _compile_cond(ent, stmt.where, params)
        out = sort_rows([r for r in rows if pred(r)], keys)
        out = out[offset:] if limit is None else out[offset:offset + limit]
        return [tuple(r[i] for i in proj) for r in out]

    if isinstance(stmt, Insert):
        if len(set(stmt.columns)) != len(stmt.columns):
            raise MalformedStatement("duplicate column in INSERT")
        supplied = {}
        for col, operand in zip(stmt.columns, stmt.values):
            if ent.field(col) is None:
                raise UnknownTableOrField(f"no field {ent.name}.{col}")
            supplied[col] = _value(operand, params)
        row = tuple(_store_value(ent, f, supplied.get(f.name)) for f in ent.fields)
        if any(r[pk_index] == row[pk_index] for r in rows):
            raise ConstraintViolation(f"duplicate primary key {row[pk_index]!r} in {ent.name}")
        rows.append(row)
        return 1

    if isinstance(stmt, Update):
        _check_cond(ent, stmt.where, params)
        changes = {}
        for col, operand in stmt.sets:
            f = ent.field(col)
            if f is None:
                raise UnknownTableOrField(f"no field {ent.name}.{col}")
            changes[ent.index_of(col)] = _store_value(ent, f, _value(operand, params))
        pred = _compile_cond(ent, stmt.where, params)
        new_rows, hit = [], 0
        for r in rows:
            if pred(r):
                hit += 1
                r = tuple(changes.get(i, v) for i, v in enumerate(r))
            new_rows.append(r)
        if pk_index in changes:
            keys = [r[pk_index] for r in new_rows]
            if len(set(keys)) != len(keys):
                raise ConstraintViolation(f"UPDATE would duplicate a primary key in {ent.name}")
        rows[:] = new_rows
        return hit

    _check_cond(ent, stmt.where, params)
    pred = _compile_cond(ent, stmt.where, params)
    kept = [r for r in rows if not pred(r)]
    removed = len(rows) - len(kept)
    rows[:] = kept
    return removed


def execute(handle: StoreHandle, statement: Statement):
    """Run a generated statement. SELECT returns a list of row tuples;
    INSERT/UPDATE/DELETE return the affected-row count."""
    with handle._lock:
        return _run(handle, statement.text, statement.params)


def execute_raw(handle: StoreHandle, text: str, params: Sequence[Any] = ()):
    """Run hand-written dialect text. No validation beyond table/field existence."""
    with handle._lock:
        return _run(handle, text, params)


def result_payload(statement: Statement, result) -> int:
    """Bytes moved by one call: the params plus the returned rows. A
    non-SELECT result is an affected count and counts as one integer."""
    size = payload_size(statement.params)
    if isinstance(result, list):
        for row in result:
            size += payload_size(row)
    else:
        size += payload_size([result])
    return size


def measure(handle: StoreHandle, statement: Statement) -> Measurement:
    """Execute and report (result, latency seconds, payload bytes).

    With ``handle.wall_clock`` the latency is the wall time of the call,
    including a real sleep of ``injected_delay``. Otherwise the injected
    delay is reported as the latency without sleeping, which keeps
    simulated runs deterministic.
    """
    start = time.perf_counter()
    result = execute(handle, statement)
    if handle.wall_clock:
        if handle.injected_delay > 0:
            time.sleep(handle.injected_delay)
        latency = time.perf_counter() - start
    else:
        latency = handle.injected_delay
    return Measurement(result, max(latency, 0.0), result_payload(statement, result))
