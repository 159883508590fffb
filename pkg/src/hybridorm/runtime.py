"""Location-aware entity operations over several stores.

Every record read back carries the location of the store it came from.
Reads fan out to all open stores and are merged; writes go to exactly one
store, given explicitly by the caller or chosen by the placement policy.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import (
    ConfidentialityViolation,
    ConstraintViolation,
    DanglingEndpoint,
    DanglingForeignKey,
    DuplicateLink,
    MissingField,
    MissingLocation,
    NoStoresRegistered,
    NotManyToMany,
    OrmError,
    PartialCascade,
    RestrictViolation,
    UnknownLocation,
)
from .placement import PlacementDecision, PlacementPolicy, eligible
from .query import TRUE, And, QueryOptions, SortSpec, build_delete, build_insert, build_select, build_update, eq
from .schema import EntityDescriptor, RelationDescriptor, SchemaRegistry
from .storage import StoreHandle, measure, open_store
from .values import payload_size, sort_rows


@dataclass
class Record:
    entity: str
    values: dict
    location: str | None = None


@dataclass
class ViewRow:
    parent: Record
    children: list = field(default_factory=list)


@dataclass(frozen=True)
class IntegrityViolation:
    kind: str  # dangling_fk | dangling_link | duplicate_link
    relation: str
    offending_key: Any
    store: str


@dataclass
class StoreStats:
    ops: int = 0
    total_latency: float = 0.0

    @property
    def mean_latency(self) -> float:
        return self.total_latency / self.ops if self.ops else 0.0


class EntityRuntime:
    """Opens every embedded store in the registry and runs entity operations on them.

    Mutations are serialized by one runtime-wide lock. Every statement is
    timed and the observation is fed to the placement policy.
    """

    def __init__(self, registry: SchemaRegistry, policy: PlacementPolicy | None = None,
                 delays: Mapping[str, float] | None = None, wall_clock: bool = True):
        if not registry.stores:
            raise NoStoresRegistered("register at least one store first")
        self.registry = registry.freeze()
        self.policy = policy or PlacementPolicy()
        delays = delays or {}
        self.handles: dict[str, StoreHandle] = {}
        for loc, desc in registry.stores.items():
            if desc.kind == "embedded":
                self.handles[loc] = open_store(registry, loc, delays.get(loc, 0.0), wall_clock)
        if not self.handles:
            raise NoStoresRegistered("no embedded store to open")
        self.decisions: list[PlacementDecision] = []
        self.stats: dict[str, StoreStats] = {loc: StoreStats() for loc in self.handles}
        self._write_lock = threading.RLock()

    # -- plumbing -----------------------------------------------------------

    def _exec(self, handle: StoreHandle, stmt):
        m = measure(handle, stmt)
        self.policy.observe(handle.location, m.latency)
        s = self.stats[handle.location]
        s.ops += 1
        s.total_latency += m.latency
        return m.result

    def handle(self, location: str) -> StoreHandle:
        try:
            return self.handles[location]
        except KeyError:
            raise UnknownLocation(location) from None

    def _records(self, ent: EntityDescriptor, filter=TRUE) -> list[Record]:
        """All matching rows from every store, store order then row order."""
        stmt = build_select(self.registry, ent.name, QueryOptions(filter=filter))
        out = []
        for loc, h in self.handles.items():
            for row in self._exec(h, stmt):
                out.append(Record(ent.name, dict(zip(ent.field_names, row)), loc))
        return out

    def _locate(self, ent: EntityDescriptor, pk) -> list[Record]:
        return self._records(ent, eq(ent.primary_key.name, pk))

    def digests(self) -> dict[str, str]:
        return {loc: h.digest() for loc, h in self.handles.items()}

    # -- reads --------------------------------------------------------------

    def select(self, entity: str, options: QueryOptions = QueryOptions()) -> list[Record]:
        ent = self.registry.entity(entity)
        pushed = QueryOptions(
            filter=options.filter,
            sorts=options.sorts,
            limit=None if options.limit is None else (options.offset or 0) + options.limit,
        )
        stmt = build_select(self.registry, entity, pushed)
        merged = []
        for loc, h in self.handles.items():
            merged.extend(row + (loc,) for row in self._exec(h, stmt))
        keys = [(ent.index_of(s.field), s.direction == "desc") for s in options.sorts]
        merged = sort_rows(merged, keys)
        start = options.offset or 0
        merged = merged[start:] if options.limit is None else merged[start:start + options.limit]
        names = ent.field_names
        return [Record(entity, dict(zip(names, row[:-1])), row[-1]) for row in merged]

    def select_view(self, relation: str, parent_options: QueryOptions = QueryOptions()) -> list[ViewRow]:
        owner, rel = self.registry.relation(relation)
        target = self.registry.entity(rel.target_entity)
        target_pk = target.primary_key.name
        by_pk = [SortSpec(target_pk)]
        out = []
        for parent in self.select(owner.name, parent_options):
            key = parent.values[owner.primary_key.name]
            if rel.kind == "one_to_many":
                children = self.select(target.name, QueryOptions(eq(rel.foreign_key_field, key), by_pk))
            else:
                link = self.registry.entity(rel.link_entity)
                pairs = []
                for lrec in self.select(link.name, QueryOptions(eq(rel.link_source_field, key))):
                    found = self.select(target.name, QueryOptions(eq(target_pk, lrec.values[rel.link_target_field])))
                    if found:
                        pairs.append((lrec, found[0]))
                link_pk = link.primary_key.name
                children = sorted(pairs, key=lambda p: (p[1].values[target_pk], p[0].values[link_pk]))
            out.append(ViewRow(parent, children))
        return out

    # -- reference checks ---------------------------------------------------

    def _check_references(self, ent: EntityDescriptor, values: Mapping, own_pk=None, changed=None):
        """Reject writes that would leave a dangling FK, dangling link or duplicate link.

        ``changed`` restricts the checks to relations touching those fields.
        """
        for owner, rel in self.registry.relations():
            if rel.kind == "one_to_many" and rel.target_entity == ent.name:
                fk = rel.foreign_key_field
                if changed is not None and fk not in changed:
                    continue
                value = values.get(fk)
                if value is not None and not self._locate(owner, value):
                    raise DanglingForeignKey(f"{ent.name}.{fk}={value!r}: no {owner.name} with that key")
            elif rel.kind == "many_to_many" and rel.link_entity == ent.name:
                src_f, dst_f = rel.link_source_field, rel.link_target_field
                if changed is not None and src_f not in changed and dst_f not in changed:
                    continue
                self._check_link(owner, rel, values.get(src_f), values.get(dst_f), own_pk)

    def _check_link(self, owner: EntityDescriptor, rel: RelationDescriptor, source_pk, target_pk, own_pk=None):
        target = self.registry.entity(rel.target_entity)
        if source_pk is None or not self._locate(owner, source_pk):
            raise DanglingEndpoint(f"{rel.name}: no {owner.name} with key {source_pk!r}")
        if target_pk is None or not self._locate(target, target_pk):
            raise DanglingEndpoint(f"{rel.name}: no {target.name} with key {target_pk!r}")
        link = self.registry.entity(rel.link_entity)
        existing = self._records(link, And([eq(rel.link_source_field, source_pk), eq(rel.link_target_field, target_pk)]))
        if any(r.values[link.primary_key.name] != own_pk for r in existing):
            raise DuplicateLink(f"{rel.name}: ({source_pk!r}, {target_pk!r}) already linked")

    def _writable(self, ent: EntityDescriptor, location: str) -> StoreHandle:
        h = self.handle(location)
        if not eligible(ent, self.registry.stores[location]):
            raise ConfidentialityViolation(f"{ent.name} is private_only; {location} is a public store")
        return h

    # -- writes -------------------------------------------------------------

    def insert(self, record: Record):
        """Write a new record and return its primary key.

        An explicit ``record.location`` is honoured; otherwise the placement
        policy picks the store and the decision is appended to ``decisions``.
        """
        ent = self.registry.entity(record.entity)
        stmt = build_insert(self.registry, ent.name, record.values)
        pk = record.values[ent.primary_key.name]
        with self._write_lock:
            if record.location is not None:
                handle = self._writable(ent, record.location)
            if self._locate(ent, pk):
                raise ConstraintViolation(f"{ent.name} key {pk!r} already exists in some store")
            self._check_references(ent, record.values)
            if record.location is None:
                decision = self.policy.choose(self.registry, ent, payload_size(stmt.params), self.handles)
                self.decisions.append(decision)
                handle = self.handles[decision.chosen]
            self._exec(handle, stmt)
        return pk

    def update(self, record: Record) -> int:
        if record.location is None:
            raise MissingLocation(f"{record.entity}: update needs the record's location")
        ent = self.registry.entity(record.entity)
        pk_name = ent.primary_key.name
        if pk_name not in record.values:
            raise MissingField(f"{ent.name}.{pk_name}")
        pk = record.values[pk_name]
        changes = {k: v for k, v in record.values.items() if k != pk_name}
        stmt = build_update(self.registry, ent.name, changes, eq(pk_name, pk))
        with self._write_lock:
            handle = self.handle(record.location)
            current = self._exec(handle, build_select(self.registry, ent.name, QueryOptions(eq(pk_name, pk))))
            if not current:
                return 0
            merged = dict(zip(ent.field_names, current[0]))
            merged.update(changes)
            self._check_references(ent, merged, own_pk=pk, changed=set(changes))
            return self._exec(handle, stmt)

    def _plan_delete(self, ent: EntityDescriptor, pk, location: str, visited: set) -> list[tuple[str, Any, str]]:
        """Deletion steps (entity, pk, location), children first, then links, then the row itself.

        Raises RestrictViolation before anything is deleted.
        """
        if (ent.name, pk) in visited:
            return []
        visited.add((ent.name, pk))
        child_steps, link_steps = [], []
        for owner, rel in self.registry.relations():
            if rel.kind == "one_to_many" and owner.name == ent.name:
                target = self.registry.entity(rel.target_entity)
                children = self._records(target, eq(rel.foreign_key_field, pk))
                if children and rel.on_delete == "restrict":
                    raise RestrictViolation(
                        f"{ent.name} {pk!r} has {len(children)} {target.name} row(s) via {rel.name}"
                    )
                for c in children:
                    child_steps += self._plan_delete(target, c.values[target.primary_key.name], c.location, visited)
            elif rel.kind == "many_to_many":
                sides = []
                if owner.name == ent.name:
                    sides.append(rel.link_source_field)
                if rel.target_entity == ent.name:
                    sides.append(rel.link_target_field)
                link = self.registry.entity(rel.link_entity)
                for side in sides:
                    links = self._records(link, eq(side, pk))
                    if links and rel.on_delete == "restrict":
                        raise RestrictViolation(f"{ent.name} {pk!r} has {len(links)} link(s) via {rel.name}")
                    for lrec in links:
                        link_steps += self._plan_delete(link, lrec.values[link.primary_key.name], lrec.location, visited)
        return child_steps + link_steps + [(ent.name, pk, location)]

    def delete(self, entity: str, pk, location: str) -> int:
        """Delete one row, honouring each relation's restrict/cascade rule across all stores.

        A cascade that fails midway raises PartialCascade listing the steps already done.
        """
        ent = self.registry.entity(entity)
        with self._write_lock:
            handle = self.handle(location)
            pk_name = ent.primary_key.name
            if not self._exec(handle, build_select(self.registry, ent.name, QueryOptions(eq(pk_name, pk)))):
                return 0
            plan = self._plan_delete(ent, pk, location, set())
            done = []
            count = 0
            for name, key, loc in plan:
                e = self.registry.entity(name)
                try:
                    count = self._exec(self.handles[loc], build_delete(self.registry, name, eq(e.primary_key.name, key)))
                except OrmError as exc:
                    raise PartialCascade(f"cascade from {entity} {pk!r} stopped at {name} {key!r}", done, exc) from exc
                done.append((name, key, loc))
            return count

    # -- links --------------------------------------------------------------

    def _m2m(self, relation: str) -> tuple[EntityDescriptor, RelationDescriptor]:
        owner, rel = self.registry.relation(relation)
        if rel.kind != "many_to_many":
            raise NotManyToMany(relation)
        return owner, rel

    def link(self, relation: str, source_pk, target_pk, location: str) -> None:
        owner, rel = self._m2m(relation)
        link = self.registry.entity(rel.link_entity)
        with self._write_lock:
            handle = self._writable(link, location)
            self._check_link(owner, rel, source_pk, target_pk)
            pk_name = link.primary_key.name
            last = self.select(link.name, QueryOptions(sorts=[SortSpec(pk_name, "desc")], limit=1))
            next_pk = last[0].values[pk_name] + 1 if last else 1
            values = {pk_name: next_pk, rel.link_source_field: source_pk, rel.link_target_field: target_pk}
            self._exec(handle, build_insert(self.registry, link.name, values))

    def unlink(self, relation: str, source_pk, target_pk) -> int:
        owner, rel = self._m2m(relation)
        stmt = build_delete(
            self.registry,
            rel.link_entity,
            And([eq(rel.link_source_field, source_pk), eq(rel.link_target_field, target_pk)]),
        )
        with self._write_lock:
            return sum(self._exec(h, stmt) for h in self.handles.values())

    # -- integrity ----------------------------------------------------------

    def check_integrity(self) -> list[IntegrityViolation]:
        """Scan every store for dangling foreign keys, dangling links and duplicate links."""
        out = []
        keys_cache: dict[str, set] = {}

        def keys(ent):
            if ent.name not in keys_cache:
                pk = ent.primary_key.name
                keys_cache[ent.name] = {r.values[pk] for r in self._records(ent)}
            return keys_cache[ent.name]

        for owner, rel in self.registry.relations():
            target = self.registry.entity(rel.target_entity)
            if rel.kind == "one_to_many":
                parents = keys(owner)
                for child in self._records(target):
                    fk = child.values[rel.foreign_key_field]
                    if fk is not None and fk not in parents:
                        out.append(IntegrityViolation(
                            "dangling_fk", rel.name, child.values[target.primary_key.name], child.location))
                continue
            link = self.registry.entity(rel.link_entity)
            sources, targets = keys(owner), keys(target)
            pk_name = link.primary_key.name
            # the lowest key of a pair is the original; every other copy is the duplicate
            seen = set()
            for lrec in sorted(self._records(link), key=lambda r: r.values[pk_name]):
                s, t = lrec.values[rel.link_source_field], lrec.values[rel.link_target_field]
                key = lrec.values[pk_name]
                if s not in sources or t not in targets:
                    out.append(IntegrityViolation("dangling_link", rel.name, key, lrec.location))
                if (s, t) in seen:
                    out.append(IntegrityViolation("duplicate_link", rel.name, key, lrec.location))
                seen.add((s, t))
        return out


def check_integrity(runtime: EntityRuntime) -> list[IntegrityViolation]:
    return runtime.check_integrity()
