"""Independent oracles and random fixture generators shared by the tests.

The oracles deliberately avoid the package's own evaluation code: filters
are evaluated by walking the tree over dict rows, LIKE is matched by
dynamic programming, and sorting uses a pairwise comparator.
"""

import datetime
import functools
import random

from hybridorm import (
    TRUE,
    And,
    Comparison,
    EntityDescriptor,
    FieldDescriptor,
    Not,
    Or,
    QueryOptions,
    RelationDescriptor,
    SchemaRegistry,
    SortSpec,
    StoreDescriptor,
)

ACCEPTANCE = []  # (number, title, passed, detail) filled by test_acceptance


# -- oracles ----------------------------------------------------------------

def like_oracle(text, pattern):
    n, m = len(text), len(pattern)
    dp = [[False] * (m + 1) for _ in range(n + 1)]
    dp[0][0] = True
    for j in range(1, m + 1):
        dp[0][j] = dp[0][j - 1] and pattern[j - 1] == "%"
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            p = pattern[j - 1]
            if p == "%":
                dp[i][j] = dp[i][j - 1] or dp[i - 1][j]
            elif p == "_" or p == text[i - 1]:
                dp[i][j] = dp[i - 1][j - 1]
    return dp[n][m]


def eval_filter(node, row):
    if node is TRUE:
        return True
    if isinstance(node, And):
        return all(eval_filter(c, row) for c in node.items)
    if isinstance(node, Or):
        return any(eval_filter(c, row) for c in node.items)
    if isinstance(node, Not):
        return not eval_filter(node.child, row)
    assert isinstance(node, Comparison)
    value, lit = row[node.field], node.literal
    if lit is None:
        return (value is None) if node.op == "eq" else (value is not None)
    if value is None:
        return False
    return {
        "eq": lambda: value == lit,
        "neq": lambda: value != lit,
        "lt": lambda: value < lit,
        "le": lambda: value <= lit,
        "gt": lambda: value > lit,
        "ge": lambda: value >= lit,
        "like": lambda: like_oracle(value, lit),
    }[node.op]()


def _cmp_values(a, b):
    if a is None and b is None:
        return 0
    if a is None:
        return -1
    if b is None:
        return 1
    return (a > b) - (a < b)


def sort_oracle(rows, sorts):
    def cmp(r1, r2):
        for s in sorts:
            c = _cmp_values(r1[s.field], r2[s.field])
            if s.direction == "desc":
                c = -c
            if c:
                return c
        return 0

    return sorted(rows, key=functools.cmp_to_key(cmp))


def query_oracle(rows, options: QueryOptions):
    """rows: list of dicts in insertion order."""
    out = [r for r in rows if eval_filter(options.filter, r)]
    out = sort_oracle(out, options.sorts)
    start = options.offset or 0
    return out[start:] if options.limit is None else out[start:start + options.limit]


def score_oracle(m, w_load, w_clients, payload):
    return payload / m.bandwidth + w_load * m.server_load + w_clients * m.active_clients + m.latency_ewma


def argmin_oracle(stores, confidentiality, metrics, w_load, w_clients, payload):
    """stores: {location: privacy}. Returns chosen location or None."""
    best, best_cost = None, None
    for loc in sorted(stores):
        if confidentiality == "private_only" and stores[loc] != "private":
            continue
        cost = score_oracle(metrics[loc], w_load, w_clients, payload)
        if best is None or cost < best_cost:
            best, best_cost = loc, cost
    return best


# -- fixtures ---------------------------------------------------------------

def student_entity():
    return EntityDescriptor(
        "Students",
        (
            FieldDescriptor("id_student", "integer", is_primary_key=True),
            FieldDescriptor("surname", "text"),
            FieldDescriptor("name", "text"),
            FieldDescriptor("birthday", "date"),
            FieldDescriptor("agv_sorce", "float"),
        ),
    )


IVANOV = {
    "id_student": 1,
    "surname": "Ivanov",
    "name": "Ivan",
    "birthday": datetime.date(1995, 1, 1),
    "agv_sorce": 4.5,
}


def campus_registry(stores=(("private1", "private"), ("public1", "public")),
                    members_on_delete="restrict", enrolled_on_delete="restrict",
                    student_conf="public_ok"):
    """Groups -1:n-> Students <-n:m-> Courses through Enrollments."""
    reg = SchemaRegistry()
    reg.register_entity(EntityDescriptor(
        "Groups",
        (FieldDescriptor("id_group", "integer", is_primary_key=True), FieldDescriptor("title", "text")),
        relations=(RelationDescriptor("members", "one_to_many", "Students",
                                      foreign_key_field="group_id", on_delete=members_on_delete),),
    ))
    reg.register_entity(EntityDescriptor(
        "Students",
        (
            FieldDescriptor("id_student", "integer", is_primary_key=True),
            FieldDescriptor("surname", "text"),
            FieldDescriptor("agv_sorce", "float", nullable=True),
            FieldDescriptor("group_id", "integer", nullable=True),
        ),
        confidentiality=student_conf,
        relations=(RelationDescriptor("enrolled", "many_to_many", "Courses", link_entity="Enrollments",
                                      link_source_field="student_id", link_target_field="course_id",
                                      on_delete=enrolled_on_delete),),
    ))
    reg.register_entity(EntityDescriptor(
        "Courses",
        (FieldDescriptor("id_course", "integer", is_primary_key=True), FieldDescriptor("title", "text")),
    ))
    reg.register_entity(EntityDescriptor(
        "Enrollments",
        (
            FieldDescriptor("id_enrollment", "integer", is_primary_key=True),
            FieldDescriptor("student_id", "integer"),
            FieldDescriptor("course_id", "integer"),
        ),
    ))
    for loc, privacy in stores:
        reg.register_store(StoreDescriptor(loc, privacy))
    return reg


# -- random schemas, rows and queries ---------------------------------------

TEXTS = ["", "a", "ab", "abc", "b", "ba", "Ivanov", "Ivan", "x_y", "100%"]
PATTERNS = ["%", "a%", "%b", "_", "__", "%a%", "Iv%", "x\\_y", "100%", "a_c", ""]


def random_value(rng, kind):
    if kind == "integer":
        return rng.randint(-3, 3)
    if kind == "float":
        return rng.choice([-1.5, 0.0, 0.5, 1.0, 2.25, 3.0])
    if kind == "text":
        return rng.choice(TEXTS)
    if kind == "date":
        return datetime.date(2020, 1, 1) + datetime.timedelta(days=rng.randint(0, 5))
    return rng.choice([True, False])


def random_entity(rng, name):
    kinds = ["integer", "float", "text", "date", "boolean"]
    pk_kind = rng.choice(["integer", "text"])
    fields = [FieldDescriptor("pk", pk_kind, is_primary_key=True)]
    for i in range(rng.randint(1, 4)):
        fields.append(FieldDescriptor(f"f{i}", rng.choice(kinds), nullable=rng.random() < 0.5))
    return EntityDescriptor(name, tuple(fields))


def random_registry(rng, n_stores=1):
    reg = SchemaRegistry()
    for i in range(rng.randint(1, 3)):
        reg.register_entity(random_entity(rng, f"E{i}"))
    for i in range(n_stores):
        reg.register_store(StoreDescriptor(f"s{i}", "public"))
    return reg


def random_rows(rng, ent, n):
    rows, used = [], set()
    pk = ent.primary_key
    while len(rows) < n:
        key = rng.randint(0, 10 * n + 10) if pk.value_kind == "integer" else f"k{rng.randint(0, 10 * n + 10)}"
        if key in used:
            continue
        used.add(key)
        row = {"pk": key}
        for f in ent.fields[1:]:
            row[f.name] = None if f.nullable and rng.random() < 0.2 else random_value(rng, f.value_kind)
        rows.append(row)
    return rows


def random_comparison(rng, ent):
    f = rng.choice(ent.fields)
    if rng.random() < 0.1 and f.nullable:
        return Comparison(f.name, rng.choice(["eq", "neq"]), None)
    if f.value_kind == "text" and rng.random() < 0.4:
        return Comparison(f.name, "like", rng.choice(PATTERNS))
    ops = ["eq", "neq", "lt", "le", "gt", "ge"]
    if f.value_kind == "boolean":
        ops = ["eq", "neq"]
    if f.name == "pk":
        lit = random_value(rng, "integer") if f.value_kind == "integer" else f"k{rng.randint(0, 30)}"
    elif f.value_kind == "float" and rng.random() < 0.3:
        lit = rng.randint(-2, 3)  # integer literal against a float field
    else:
        lit = random_value(rng, f.value_kind)
    return Comparison(f.name, rng.choice(ops), lit)


def random_filter(rng, ent, depth=4):
    if depth <= 1 or rng.random() < 0.35:
        return TRUE if rng.random() < 0.08 else random_comparison(rng, ent)
    r = rng.random()
    if r < 0.35:
        return And([random_filter(rng, ent, depth - 1) for _ in range(rng.randint(0, 3))])
    if r < 0.7:
        return Or([random_filter(rng, ent, depth - 1) for _ in range(rng.randint(0, 3))])
    return Not(random_filter(rng, ent, depth - 1))


def filter_depth(node):
    if isinstance(node, (And, Or)):
        return 1 + max((filter_depth(c) for c in node.items), default=0)
    if isinstance(node, Not):
        return 1 + filter_depth(node.child)
    return 1


def random_options(rng, ent, depth=4):
    sorts = [SortSpec(f.name, rng.choice(["asc", "desc"])) for f in rng.sample(ent.fields, rng.randint(0, 2))]
    limit = rng.choice([None, None, 0, 1, 3, 10])
    offset = rng.choice([None, None, 0, 2, 5])
    filt = random_filter(rng, ent, depth) if rng.random() < 0.9 else TRUE
    return QueryOptions(filt, sorts, limit, offset)


def rng_for(seed):
    return random.Random(seed)


# -- random runtime workloads -----------------------------------------------

def random_stores(rng, lo=2, hi=4):
    n = rng.randint(lo, hi)
    privacies = [rng.choice(["public", "private"]) for _ in range(n)]
    privacies[rng.randrange(n)] = "private"
    return tuple((f"st{i}", p) for i, p in enumerate(privacies))


def random_campus(rng, lo=2, hi=4):
    return campus_registry(
        stores=random_stores(rng, lo, hi),
        members_on_delete=rng.choice(["restrict", "cascade"]),
        enrolled_on_delete=rng.choice(["restrict", "cascade"]),
        student_conf=rng.choice(["public_ok", "private_only"]),
    )


def random_op(rng, rt):
    """One random runtime call as (kind, record, thunk). Domain errors are expected outcomes."""
    from hybridorm import Record

    locs = list(rt.handles)

    def loc_or_none():
        return rng.choice(locs) if rng.random() < 0.6 else None

    def some_pk():
        return rng.randint(0, 8)

    r = rng.random()
    if r < 0.12:
        rec = Record("Groups", {"id_group": some_pk(), "title": rng.choice(TEXTS)}, loc_or_none())
        return "insert", rec, lambda: rt.insert(rec)
    if r < 0.32:
        rec = Record("Students", {"id_student": some_pk(), "surname": rng.choice(TEXTS),
                                  "agv_sorce": rng.choice([None, 3.0, 4.5]),
                                  "group_id": rng.choice([None, some_pk()])}, loc_or_none())
        return "insert", rec, lambda: rt.insert(rec)
    if r < 0.42:
        rec = Record("Courses", {"id_course": some_pk(), "title": rng.choice(TEXTS)}, loc_or_none())
        return "insert", rec, lambda: rt.insert(rec)
    if r < 0.55:
        s, c, loc = some_pk(), some_pk(), rng.choice(locs)
        return "link", None, lambda: rt.link("enrolled", s, c, loc)
    if r < 0.62:
        s, c = some_pk(), some_pk()
        return "unlink", None, lambda: rt.unlink("enrolled", s, c)
    if r < 0.72:
        rec = Record("Students", {"id_student": some_pk(), "group_id": rng.choice([None, some_pk()]),
                                  "agv_sorce": 4.0}, rng.choice(locs))
        return "update", rec, lambda: rt.update(rec)
    if r < 0.86:
        entity = rng.choice(["Groups", "Students", "Courses", "Enrollments"])
        pk, loc = some_pk(), rng.choice(locs)
        return "delete", None, lambda: rt.delete(entity, pk, loc)
    entity = rng.choice(["Groups", "Students", "Courses"])
    ent = rt.registry.entities[entity]
    opts = random_options(rng, ent, depth=3)
    return "select", entity, lambda: rt.select(entity, opts)
