"""
Relations spanning stores
=========================

Groups, students and courses live in different stores. Views join them
back together, writes are checked against every store, and deletes follow
each relation's restrict or cascade rule.
"""

import datetime
from importlib import resources

from hybridorm import EntityRuntime, QueryOptions, Record, eq, execute_raw, load_schema
from hybridorm.errors import ConfidentialityViolation, DanglingForeignKey, RestrictViolation

registry = load_schema(resources.files("hybridorm") / "data" / "demo_schema.json")
rt = EntityRuntime(registry)
print(sorted(rt.handles))  # the external archive store is declared but not opened

rt.insert(Record("Groups", {"id_group": 1, "title": "CS-101"}, "public1"))
rt.insert(Record("Courses", {"id_course": 10, "title": "Databases", "credits": 5}, "public1"))
rt.insert(Record("Courses", {"id_course": 11, "title": "Networks", "credits": 4}, "public2"))
for sid, surname in [(1, "Ivanov"), (2, "Petrov")]:
    rt.insert(Record("Students", {"id_student": sid, "surname": surname, "name": "N",
                                  "birthday": datetime.date(2000, 1, 1), "agv_sorce": 4.0, "group_id": 1}, "private1"))
rt.link("enrolled", 1, 10, "private1")
rt.link("enrolled", 1, 11, "private1")
rt.link("enrolled", 2, 11, "private1")

###############################################################################
# Students are confidential, so a public store refuses them. A student
# pointing at a group that exists nowhere is refused too.

for bad, loc in [({"id_student": 3, "group_id": 1}, "public1"), ({"id_student": 4, "group_id": 99}, "private1")]:
    values = {"surname": "X", "name": "Y", "birthday": datetime.date(2000, 1, 1), "agv_sorce": 3.0, **bad}
    try:
        rt.insert(Record("Students", values, loc))
    except (ConfidentialityViolation, DanglingForeignKey) as exc:
        print(type(exc).__name__, exc)

###############################################################################
# One-to-many and many-to-many views.

for row in rt.select_view("members"):
    print(row.parent.values["title"], [c.values["surname"] for c in row.children])
for row in rt.select_view("enrolled", QueryOptions(eq("id_student", 1))):
    print(row.parent.values["surname"], [(link.location, course.values["title"]) for link, course in row.children])

###############################################################################
# ``members`` restricts: the group cannot go while it has students.
# ``enrolled`` cascades: deleting a student takes its links with it.

try:
    rt.delete("Groups", 1, "public1")
except RestrictViolation as exc:
    print("refused:", exc)
rt.delete("Students", 2, "private1")
print([r.values for r in rt.select("Enrollments")])
print(rt.check_integrity())

###############################################################################
# Statements issued behind the runtime's back are caught by the checker.

execute_raw(rt.handle("public2"), "DELETE FROM Courses WHERE id_course = ?", [11])
for v in rt.check_integrity():
    print(v)
