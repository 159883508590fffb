"""
Mapping one entity onto a store
===============================

A single ``Students`` entity, the statements generated for it, and a
record making the round trip through the embedded store.
"""

import datetime

from hybridorm import (
    EntityDescriptor,
    EntityRuntime,
    FieldDescriptor,
    QueryOptions,
    Record,
    SchemaRegistry,
    SortSpec,
    StoreDescriptor,
    And,
    build_insert,
    build_select,
    ge,
    like,
)

students = EntityDescriptor(
    "Students",
    (
        FieldDescriptor("id_student", "integer", is_primary_key=True),
        FieldDescriptor("surname", "text"),
        FieldDescriptor("name", "text"),
        FieldDescriptor("birthday", "date"),
        FieldDescriptor("agv_sorce", "float"),
    ),
)

registry = SchemaRegistry()
registry.register_entity(students)
registry.register_store(StoreDescriptor("private1", "private"))

###############################################################################
# Statements are plain text with ``?`` placeholders; values travel separately.

print(build_select(registry, "Students", QueryOptions()).text)

ivanov = {"id_student": 1, "surname": "Ivanov", "name": "Ivan",
          "birthday": datetime.date(1995, 1, 1), "agv_sorce": 4.5}
stmt = build_insert(registry, "Students", ivanov)
print(stmt.text)
print(stmt.params)

opts = QueryOptions(And([ge("agv_sorce", 4.0), like("surname", "Iv%")]),
                    [SortSpec("surname"), SortSpec("birthday", "desc")], limit=10, offset=0)
stmt = build_select(registry, "Students", opts)
print(stmt.text)
print(stmt.params)

###############################################################################
# The runtime opens the store and hands records back with their location.

rt = EntityRuntime(registry)
rt.insert(Record("Students", ivanov, "private1"))
rt.insert(Record("Students", {**ivanov, "id_student": 2, "surname": "Petrov", "agv_sorce": 3.9}, "private1"))

for rec in rt.select("Students", opts):
    print(rec.location, rec.values)
