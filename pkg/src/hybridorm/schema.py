"""Declarative metadata registry: entities, fields, relations and stores."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import (
    DuplicateEntity,
    DuplicateLocation,
    FrozenRegistry,
    InvalidDescriptor,
    SchemaFormatError,
)

LOCATION_ATTRIBUTE = "__location"

VALUE_KINDS = ("integer", "float", "text", "date", "boolean")
CONFIDENTIALITY = ("public_ok", "private_only")
RELATION_KINDS = ("one_to_many", "many_to_many")
ON_DELETE = ("restrict", "cascade")
PRIVACY = ("public", "private")
STORE_KINDS = ("embedded", "external")

_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def is_identifier(name: Any) -> bool:
    return isinstance(name, str) and bool(_IDENTIFIER.match(name))


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    value_kind: str
    nullable: bool = False
    is_primary_key: bool = False


@dataclass(frozen=True)
class RelationDescriptor:
    """A relation owned by its source entity.

    ``one_to_many`` relations name the foreign-key field on the target
    entity. ``many_to_many`` relations go through ``link_entity``, whose
    ``link_source_field`` and ``link_target_field`` hold the source and
    target primary keys.
    """

    name: str
    kind: str
    target_entity: str
    foreign_key_field: str | None = None
    link_entity: str | None = None
    link_source_field: str | None = None
    link_target_field: str | None = None
    on_delete: str = "restrict"


@dataclass(frozen=True)
class EntityDescriptor:
    name: str
    fields: tuple[FieldDescriptor, ...]
    confidentiality: str = "public_ok"
    relations: tuple[RelationDescriptor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "relations", tuple(self.relations))

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def primary_key(self) -> FieldDescriptor:
        for f in self.fields:
            if f.is_primary_key:
                return f
        raise InvalidDescriptor(f"{self.name}: no primary-key field")

    def field(self, name: str) -> FieldDescriptor | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def index_of(self, name: str) -> int:
        return self.field_names.index(name)

    def problems(self) -> list[str]:
        """Return the intra-entity invariant violations (empty when valid)."""
        out = []
        if not is_identifier(self.name):
            out.append(f"entity name {self.name!r} is not an identifier")
        if self.confidentiality not in CONFIDENTIALITY:
            out.append(f"unknown confidentiality {self.confidentiality!r}")
        seen = set()
        for f in self.fields:
            if not is_identifier(f.name):
                out.append(f"field name {f.name!r} is not an identifier")
            if f.name == LOCATION_ATTRIBUTE:
                out.append(f"field name {LOCATION_ATTRIBUTE!r} is reserved")
            if f.name in seen:
                out.append(f"duplicate field {f.name!r}")
            seen.add(f.name)
            if f.value_kind not in VALUE_KINDS:
                out.append(f"field {f.name!r} has unknown kind {f.value_kind!r}")
            if f.is_primary_key and f.nullable:
                out.append(f"primary-key field {f.name!r} is nullable")
        n_pk = sum(1 for f in self.fields if f.is_primary_key)
        if n_pk != 1:
            out.append(f"expected exactly one primary-key field, found {n_pk}")
        rel_names = set()
        for r in self.relations:
            if not is_identifier(r.name):
                out.append(f"relation name {r.name!r} is not an identifier")
            if r.name in rel_names:
                out.append(f"duplicate relation {r.name!r}")
            rel_names.add(r.name)
            if r.kind not in RELATION_KINDS:
                out.append(f"relation {r.name!r} has unknown kind {r.kind!r}")
            if r.on_delete not in ON_DELETE:
                out.append(f"relation {r.name!r} has unknown on_delete {r.on_delete!r}")
            if r.kind == "one_to_many" and (
                not r.foreign_key_field or r.link_entity is not None
            ):
                out.append(f"one_to_many relation {r.name!r} needs foreign_key_field only")
            if r.kind == "many_to_many" and (
                not r.link_entity
                or not r.link_source_field
                or not r.link_target_field
                or r.foreign_key_field is not None
            ):
                out.append(
                    f"many_to_many relation {r.name!r} needs link_entity, "
                    "link_source_field and link_target_field"
                )
        return out


@dataclass(frozen=True)
class StoreDescriptor:
    location: str
    privacy: str
    kind: str = "embedded"
    connection_hint: str | None = None


@dataclass(frozen=True)
class Diagnostic:
    code: str
    entity: str
    relation: str | None
    message: str
    level: str = "ERROR"

    def __str__(self):
        where = self.entity if self.relation is None else f"{self.entity}.{self.relation}"
        return f"{self.level} {where}: {self.message}"


@dataclass
class SchemaRegistry:
    entities: dict[str, EntityDescriptor] = field(default_factory=dict)
    stores: dict[str, StoreDescriptor] = field(default_factory=dict)
    frozen: bool = False

    def register_entity(self, descriptor: EntityDescriptor) -> "SchemaRegistry":
        self._check_mutable()
        problems = descriptor.problems()
        if problems:
            raise InvalidDescriptor(f"{descriptor.name}: " + "; ".join(problems))
        if descriptor.name in self.entities:
            raise DuplicateEntity(descriptor.name)
        self.entities[descriptor.name] = descriptor
        return self

    def register_store(self, store: StoreDescriptor) -> "SchemaRegistry":
        self._check_mutable()
        if not isinstance(store.location, str) or not store.location:
            raise InvalidDescriptor(f"bad store location {store.location!r}")
        if store.privacy not in PRIVACY:
            raise InvalidDescriptor(f"{store.location}: unknown privacy {store.privacy!r}")
        if store.kind not in STORE_KINDS:
            raise InvalidDescriptor(f"{store.location}: unknown store kind {store.kind!r}")
        if store.location in self.stores:
            raise DuplicateLocation(store.location)
        self.stores[store.location] = store
        return self

    def freeze(self) -> "SchemaRegistry":
        self.frozen = True
        return self

    def _check_mutable(self):
        if self.frozen:
            raise FrozenRegistry("registry is frozen")

    def entity(self, name: str) -> EntityDescriptor:
        from .errors import UnknownEntity

        try:
            return self.entities[name]
        except KeyError:
            raise UnknownEntity(name) from None

    def relations(self) -> Iterable[tuple[EntityDescriptor, RelationDescriptor]]:
        """Every (owner, relation) pair, in registration order."""
        for ent in self.entities.values():
            for rel in ent.relations:
                yield ent, rel

    def relation(self, name: str) -> tuple[EntityDescriptor, RelationDescriptor]:
        """Look up a relation by bare name or by ``Entity.relation``."""
        from .errors import UnknownRelation

        owner_name = None
        if "." in name:
            owner_name, name = name.split(".", 1)
        found = [
            (ent, rel)
            for ent, rel in self.relations()
            if rel.name == name and (owner_name is None or ent.name == owner_name)
        ]
        if len(found) != 1:
            raise UnknownRelation(name if owner_name is None else f"{owner_name}.{name}")
        return found[0]

    def link_entities(self) -> dict[str, tuple[EntityDescriptor, RelationDescriptor]]:
        return {
            rel.link_entity: (ent, rel)
            for ent, rel in self.relations()
            if rel.kind == "many_to_many"
        }


def register_entity(registry: SchemaRegistry, descriptor: EntityDescriptor) -> SchemaRegistry:
    return registry.register_entity(descriptor)


def register_store(registry: SchemaRegistry, store: StoreDescriptor) -> SchemaRegistry:
    return registry.register_store(store)


def validate_schema(registry: SchemaRegistry) -> list[Diagnostic]:
    """Check cross-entity invariants. An empty list means the schema is sound."""
    diags: list[Diagnostic] = []
    seen_relations: dict[str, str] = {}
    for ent, rel in registry.relations():
        def bad(code, msg):
            diags.append(Diagnostic(code, ent.name, rel.name, msg))

        if rel.name in seen_relations:
            bad(
                "DuplicateRelation",
                f"relation name also declared on {seen_relations[rel.name]}",
            )
        else:
            seen_relations[rel.name] = ent.name

        target = registry.entities.get(rel.target_entity)
        if target is None:
            bad("UnresolvedTarget", f"target entity {rel.target_entity!r} is not registered")
            continue
        source_pk = ent.primary_key

        if rel.kind == "one_to_many":
            fk = target.field(rel.foreign_key_field)
            if fk is None:
                bad(
                    "MissingForeignKey",
                    f"foreign key {rel.foreign_key_field!r} not found on {target.name}",
                )
            elif fk.is_primary_key:
                bad("MissingForeignKey", f"foreign key {fk.name!r} is the primary key of {target.name}")
            elif fk.value_kind != source_pk.value_kind:
                bad(
                    "ForeignKeyKindMismatch",
                    f"{target.name}.{fk.name} is {fk.value_kind}, "
                    f"{ent.name}.{source_pk.name} is {source_pk.value_kind}",
                )
            continue

        link = registry.entities.get(rel.link_entity)
        if link is None:
            bad("UnresolvedLink", f"link entity {rel.link_entity!r} is not registered")
            continue
        target_pk = target.primary_key
        problems = []
        src = link.field(rel.link_source_field)
        dst = link.field(rel.link_target_field)
        if src is None:
            problems.append(f"missing source key {rel.link_source_field!r}")
        if dst is None:
            problems.append(f"missing target key {rel.link_target_field!r}")
        if src is not None and dst is not None:
            if src.name == dst.name:
                problems.append("source and target keys are the same field")
            if src.is_primary_key or dst.is_primary_key:
                problems.append("link keys must not be the link primary key")
            if src.value_kind != source_pk.value_kind:
                problems.append(f"source key kind {src.value_kind} != {source_pk.value_kind}")
            if dst.value_kind != target_pk.value_kind:
                problems.append(f"target key kind {dst.value_kind} != {target_pk.value_kind}")
            if src.nullable or dst.nullable:
                problems.append("link keys must not be nullable")
        if link.primary_key.value_kind != "integer":
            problems.append("link primary key must be an integer")
        extra = [
            f.name
            for f in link.fields
            if not f.is_primary_key
            and f.name not in (rel.link_source_field, rel.link_target_field)
            and not f.nullable
        ]
        if extra:
            problems.append(f"non-nullable extra fields {extra}")
        if problems:
            bad("MalformedLink", f"link entity {link.name}: " + "; ".join(problems))
    return diags


# -- JSON schema files ------------------------------------------------------

_TOP_KEYS = {"entities", "stores"}
_ENTITY_KEYS = {"name", "confidentiality", "fields", "relations"}
_FIELD_KEYS = {"name", "kind", "pk", "nullable"}
_RELATION_KEYS = {
    "name", "kind", "target", "foreign_key", "link", "link_source", "link_target", "on_delete",
}
_STORE_KEYS = {"location", "privacy", "kind", "connection_hint"}


def _obj(value, keys, required, what):
    if not isinstance(value, dict):
        raise SchemaFormatError(f"{what}: expected an object")
    unknown = set(value) - keys
    if unknown:
        raise SchemaFormatError(f"{what}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(value)
    if missing:
        raise SchemaFormatError(f"{what}: missing keys {sorted(missing)}")
    return value


def _choice(value, options, what):
    if value not in options:
        raise SchemaFormatError(f"{what}: {value!r} not one of {list(options)}")
    return value


def _flag(value, what):
    if not isinstance(value, bool):
        raise SchemaFormatError(f"{what}: expected true/false")
    return value


def _text(value, what):
    if not isinstance(value, str):
        raise SchemaFormatError(f"{what}: expected a string")
    return value


def parse_schema_document(doc: Any) -> tuple[list[EntityDescriptor], list[StoreDescriptor]]:
    """Strictly parse a decoded schema document into descriptors.

    Only the document shape is checked here; descriptor invariants are
    checked on registration.
    """
    _obj(doc, _TOP_KEYS, ["entities"], "schema")
    entities = []
    raw_entities = doc["entities"]
    if not isinstance(raw_entities, list):
        raise SchemaFormatError("schema.entities: expected a list")
    for i, raw in enumerate(raw_entities):
        what = f"entities[{i}]"
        _obj(raw, _ENTITY_KEYS, ["name", "fields"], what)
        if not isinstance(raw["fields"], list) or not isinstance(raw.get("relations", []), list):
            raise SchemaFormatError(f"{what}: fields/relations must be lists")
        fields = []
        for j, rf in enumerate(raw["fields"]):
            fw = f"{what}.fields[{j}]"
            _obj(rf, _FIELD_KEYS, ["name", "kind"], fw)
            fields.append(
                FieldDescriptor(
                    name=_text(rf["name"], fw),
                    value_kind=_choice(rf["kind"], VALUE_KINDS, fw),
                    nullable=_flag(rf.get("nullable", False), fw),
                    is_primary_key=_flag(rf.get("pk", False), fw),
                )
            )
        relations = []
        for j, rr in enumerate(raw.get("relations", [])):
            rw = f"{what}.relations[{j}]"
            _obj(rr, _RELATION_KEYS, ["name", "kind", "target"], rw)
            opt = {k: _text(rr[k], rw) for k in ("foreign_key", "link", "link_source", "link_target") if k in rr}
            relations.append(
                RelationDescriptor(
                    name=_text(rr["name"], rw),
                    kind=_choice(rr["kind"], RELATION_KINDS, rw),
                    target_entity=_text(rr["target"], rw),
                    foreign_key_field=opt.get("foreign_key"),
                    link_entity=opt.get("link"),
                    link_source_field=opt.get("link_source"),
                    link_target_field=opt.get("link_target"),
                    on_delete=_choice(rr.get("on_delete", "restrict"), ON_DELETE, rw),
                )
            )
        entities.append(
            EntityDescriptor(
                name=_text(raw["name"], what),
                fields=tuple(fields),
                confidentiality=_choice(
                    raw.get("confidentiality", "public_ok"), CONFIDENTIALITY, what
                ),
                relations=tuple(relations),
            )
        )
    stores = []
    raw_stores = doc.get("stores", [])
    if not isinstance(raw_stores, list):
        raise SchemaFormatError("schema.stores: expected a list")
    for i, rs in enumerate(raw_stores):
        what = f"stores[{i}]"
        _obj(rs, _STORE_KEYS, ["location", "privacy"], what)
        kind = _choice(rs.get("kind", "embedded"), STORE_KINDS, what)
        if "connection_hint" in rs and kind != "external":
            raise SchemaFormatError(f"{what}: connection_hint is only valid for external stores")
        stores.append(
            StoreDescriptor(
                location=_text(rs["location"], what),
                privacy=_choice(rs["privacy"], PRIVACY, what),
                kind=kind,
                connection_hint=_text(rs["connection_hint"], what) if "connection_hint" in rs else None,
            )
        )
    return entities, stores


def registry_from_document(doc: Any) -> SchemaRegistry:
    entities, stores = parse_schema_document(doc)
    registry = SchemaRegistry()
    for ent in entities:
        registry.register_entity(ent)
    for store in stores:
        registry.register_store(store)
    return registry


def read_schema_document(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaFormatError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaFormatError(f"{path}: invalid JSON: {exc}") from exc


def load_schema(path: str | Path) -> SchemaRegistry:
    return registry_from_document(read_schema_document(path))


def registry_to_document(registry: SchemaRegistry) -> dict:
    """Inverse of :func:`registry_from_document` (defaults are written out)."""
    entities = []
    for ent in registry.entities.values():
        fields = []
        for f in ent.fields:
            d = {"name": f.name, "kind": f.value_kind}
            if f.is_primary_key:
                d["pk"] = True
            if f.nullable:
                d["nullable"] = True
            fields.append(d)
        relations = []
        for r in ent.relations:
            d = {"name": r.name, "kind": r.kind, "target": r.target_entity}
            if r.kind == "one_to_many":
                d["foreign_key"] = r.foreign_key_field
            else:
                d.update(link=r.link_entity, link_source=r.link_source_field,
                         link_target=r.link_target_field)
            d["on_delete"] = r.on_delete
            relations.append(d)
        entities.append({
            "name": ent.name,
            "confidentiality": ent.confidentiality,
            "fields": fields,
            "relations": relations,
        })
    stores = []
    for s in registry.stores.values():
        d = {"location": s.location, "privacy": s.privacy, "kind": s.kind}
        if s.connection_hint is not None:
            d["connection_hint"] = s.connection_hint
        stores.append(d)
    return {"entities": entities, "stores": stores}
