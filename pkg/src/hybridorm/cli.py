"""Command-line harness: validate schemas, replay workload scripts, explain placement.

Exit status: 0 success, 1 domain failure, 2 input failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import NoEligibleStore, OrmError, SchemaError, SchemaFormatError
from .placement import PlacementPolicy, PolicyWeights, StoreMetrics, choose_location
from .query import QueryOptions, SortSpec, filter_from_json, map_literals
from .runtime import EntityRuntime, Record
from .schema import SchemaRegistry, parse_schema_document, read_schema_document, validate_schema
from .values import from_json, to_json

REPORT_VERSION = 1

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT = 0, 1, 2


class ScriptError(Exception):
    """The workload script is unreadable or malformed (exit status 2)."""


# -- validate ---------------------------------------------------------------

def schema_diagnostics(doc: Any) -> tuple[SchemaRegistry, list[str]]:
    """Register everything in a parsed schema document, collecting problems as lines."""
    entities, stores = parse_schema_document(doc)
    registry = SchemaRegistry()
    lines = []
    for ent in entities:
        try:
            registry.register_entity(ent)
        except SchemaError as exc:
            lines.append(f"ERROR {ent.name}: {type(exc).__name__}: {exc}")
    for store in stores:
        try:
            registry.register_store(store)
        except SchemaError as exc:
            lines.append(f"ERROR {store.location}: {type(exc).__name__}: {exc}")
    lines += [str(d) for d in validate_schema(registry)]
    return registry, lines


def cmd_validate(schema_path, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        doc = read_schema_document(schema_path)
        _, lines = schema_diagnostics(doc)
    except SchemaFormatError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    for line in lines:
        print(line, file=out)
    return EXIT_DOMAIN if lines else EXIT_OK


# -- workload scripts -------------------------------------------------------

_SCRIPT_KEYS = {"schema_path", "schema", "stores", "policy", "ops"}
_STORE_CFG_KEYS = {"injected_delay", "metrics"}
_METRIC_KEYS = {"bandwidth", "server_load", "active_clients", "latency_ewma"}
_POLICY_KEYS = {"w_load", "w_clients", "ewma_alpha"}
_OP_KEYS = {
    "insert": ({"entity", "values"}, {"location"}),
    "select": ({"entity"}, {"filter", "sort", "limit", "offset"}),
    "update": ({"entity", "values", "location"}, set()),
    "delete": ({"entity", "pk", "location"}, set()),
    "link": ({"relation", "source", "target", "location"}, set()),
    "unlink": ({"relation", "source", "target"}, set()),
    "view": ({"relation"}, {"filter", "sort", "limit", "offset"}),
    "check": (set(), set()),
    "metrics": ({"location"}, {"bandwidth", "server_load", "active_clients"}),
}


@dataclass
class Workload:
    registry: SchemaRegistry
    delays: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    weights: PolicyWeights = field(default_factory=PolicyWeights)
    ops: list = field(default_factory=list)


def _keys(obj, required, optional, what):
    if not isinstance(obj, dict):
        raise ScriptError(f"{what}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    missing = set(required) - set(obj)
    if unknown:
        raise ScriptError(f"{what}: unknown keys {sorted(unknown)}")
    if missing:
        raise ScriptError(f"{what}: missing keys {sorted(missing)}")


def load_workload(script_path) -> Workload:
    path = Path(script_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScriptError(f"cannot read {path}: {exc}") from exc
    _keys(doc, {"ops"}, _SCRIPT_KEYS - {"ops"}, "script")
    if ("schema" in doc) == ("schema_path" in doc):
        raise ScriptError("script: give exactly one of schema_path or schema")
    try:
        schema_doc = doc["schema"] if "schema" in doc else read_schema_document(path.parent / doc["schema_path"])
        registry, problems = schema_diagnostics(schema_doc)
    except SchemaFormatError as exc:
        raise ScriptError(str(exc)) from exc
    if problems:
        raise ScriptError("schema: " + "; ".join(problems))

    wl = Workload(registry)
    stores = doc.get("stores", {})
    if not isinstance(stores, dict):
        raise ScriptError("script.stores: expected an object")
    for loc, cfg in stores.items():
        what = f"stores.{loc}"
        if loc not in registry.stores:
            raise ScriptError(f"{what}: not a registered store")
        _keys(cfg, set(), _STORE_CFG_KEYS, what)
        delay = cfg.get("injected_delay", 0.0)
        if not isinstance(delay, (int, float)) or isinstance(delay, bool) or delay < 0:
            raise ScriptError(f"{what}.injected_delay: expected a non-negative number")
        wl.delays[loc] = float(delay)
        if "metrics" in cfg:
            _keys(cfg["metrics"], set(), _METRIC_KEYS, f"{what}.metrics")
            try:
                wl.metrics[loc] = StoreMetrics(**cfg["metrics"]).check()
            except (OrmError, TypeError) as exc:
                raise ScriptError(f"{what}.metrics: {exc}") from exc
    policy = doc.get("policy", {})
    _keys(policy, set(), _POLICY_KEYS, "script.policy")
    try:
        wl.weights = PolicyWeights(**policy)
    except (ValueError, TypeError) as exc:
        raise ScriptError(f"script.policy: {exc}") from exc

    ops = doc["ops"]
    if not isinstance(ops, list):
        raise ScriptError("script.ops: expected a list")
    for i, op in enumerate(ops):
        wl.ops.append(_check_op(registry, op, f"ops[{i}]"))
    return wl


def _check_op(registry: SchemaRegistry, op, what):
    if not isinstance(op, dict) or op.get("op") not in _OP_KEYS:
        raise ScriptError(f"{what}: unknown op {op.get('op') if isinstance(op, dict) else op!r}")
    required, optional = _OP_KEYS[op["op"]]
    _keys(op, required | {"op"}, optional | {"expect_error"}, what)
    if not isinstance(op.get("expect_error", False), bool):
        raise ScriptError(f"{what}.expect_error: expected true/false")
    if "entity" in op and op["entity"] not in registry.entities:
        raise ScriptError(f"{what}: unknown entity {op['entity']!r}")
    if "relation" in op:
        try:
            registry.relation(op["relation"])
        except OrmError:
            raise ScriptError(f"{what}: unknown relation {op['relation']!r}") from None
    if "values" in op and not isinstance(op["values"], dict):
        raise ScriptError(f"{what}.values: expected an object")
    if op["op"] in ("select", "view"):
        try:
            _options(registry, _op_entity(registry, op), op)
        except (ValueError, TypeError) as exc:
            raise ScriptError(f"{what}: {exc}") from exc
    return op


def _op_entity(registry, op):
    if "entity" in op:
        return registry.entities[op["entity"]]
    return registry.relation(op["relation"])[0]


def _decode_values(ent, values: dict) -> dict:
    out = {}
    for name, value in values.items():
        f = ent.field(name)
        out[name] = from_json(value, f.value_kind) if f is not None else value
    return out


def _options(registry, ent, op) -> QueryOptions:
    def decode(name, literal):
        f = ent.field(name)
        return from_json(literal, f.value_kind) if f is not None else literal

    flt = map_literals(filter_from_json(op.get("filter", True)), decode)
    sorts = []
    for s in op.get("sort", []):
        if isinstance(s, str):
            sorts.append(SortSpec(s))
        elif isinstance(s, list) and len(s) == 2:
            sorts.append(SortSpec(s[0], s[1]))
        else:
            raise ValueError(f"bad sort entry {s!r}")
    return QueryOptions(flt, sorts, op.get("limit"), op.get("offset"))


def _record_json(rec: Record) -> dict:
    return {"location": rec.location, "values": {k: to_json(v) for k, v in rec.values.items()}}


def _run_op(rt: EntityRuntime, op: dict) -> dict:
    reg = rt.registry
    kind = op["op"]
    if kind == "insert":
        ent = reg.entities[op["entity"]]
        rec = Record(ent.name, _decode_values(ent, op["values"]), op.get("location"))
        before = len(rt.decisions)
        pk = rt.insert(rec)
        location = rec.location or rt.decisions[-1].chosen
        return {"pk": to_json(pk), "location": location, "placed": len(rt.decisions) > before}
    if kind == "select":
        ent = reg.entities[op["entity"]]
        recs = rt.select(ent.name, _options(reg, ent, op))
        return {"count": len(recs), "records": [_record_json(r) for r in recs]}
    if kind == "update":
        ent = reg.entities[op["entity"]]
        return {"affected": rt.update(Record(ent.name, _decode_values(ent, op["values"]), op["location"]))}
    if kind == "delete":
        ent = reg.entities[op["entity"]]
        pk = from_json(op["pk"], ent.primary_key.value_kind)
        return {"affected": rt.delete(ent.name, pk, op["location"])}
    if kind in ("link", "unlink"):
        owner, rel = reg.relation(op["relation"])
        target = reg.entities[rel.target_entity]
        s = from_json(op["source"], owner.primary_key.value_kind)
        t = from_json(op["target"], target.primary_key.value_kind)
        if kind == "link":
            rt.link(op["relation"], s, t, op["location"])
            return {}
        return {"affected": rt.unlink(op["relation"], s, t)}
    if kind == "view":
        owner, _ = reg.relation(op["relation"])
        rows = []
        for vr in rt.select_view(op["relation"], _options(reg, owner, op)):
            children = [
                _record_json(c) if isinstance(c, Record) else {"link": _record_json(c[0]), "target": _record_json(c[1])}
                for c in vr.children
            ]
            rows.append({"parent": _record_json(vr.parent), "children": children})
        return {"rows": rows}
    if kind == "metrics":
        m = rt.policy.update(
            rt.handle(op["location"]).location,
            op.get("bandwidth"), op.get("server_load"), op.get("active_clients"),
        )
        return {"metrics": _metrics_json(m)}
    return {"violations": [_violation_json(v) for v in rt.check_integrity()]}


def _violation_json(v) -> dict:
    return {"kind": v.kind, "relation": v.relation, "offending_key": to_json(v.offending_key), "store": v.store}


def _metrics_json(m: StoreMetrics) -> dict:
    return {
        "bandwidth": m.bandwidth,
        "server_load": m.server_load,
        "active_clients": m.active_clients,
        "latency_ewma": m.latency_ewma,
    }


def run_workload(wl: Workload, wall_clock: bool = False) -> tuple[dict, int]:
    """Replay the ops in order on fresh embedded stores; return (report, exit status)."""
    rt = EntityRuntime(wl.registry, PlacementPolicy(wl.weights, wl.metrics), wl.delays, wall_clock=wall_clock)
    entries, placements = [], []
    status = EXIT_OK
    for i, op in enumerate(wl.ops):
        entry: dict[str, Any] = {"index": i, "op": op["op"]}
        if status != EXIT_OK:
            entry["status"] = "skipped"
            entries.append(entry)
            continue
        expect_error = op.get("expect_error", False)
        before = len(rt.decisions)
        try:
            result = _run_op(rt, op)
        except OrmError as exc:
            error = {"type": type(exc).__name__, "message": str(exc)}
            if expect_error:
                entry.update(status="expected_error", error=error)
            else:
                entry.update(status="error", error=error)
                status = EXIT_DOMAIN
        else:
            if expect_error:
                entry.update(status="unexpected_success", result=result)
                status = EXIT_DOMAIN
            else:
                entry.update(status="ok", result=result)
        for d in rt.decisions[before:]:
            placements.append({
                "op_index": i,
                "entity": op.get("entity"),
                "chosen": d.chosen,
                "eligible": d.eligible,
                "ineligible": d.ineligible,
                "scores": d.scores,
            })
        entries.append(entry)

    final = rt.policy.snapshot()
    report = {
        "report_version": REPORT_VERSION,
        "exit_status": status,
        "op_count": len(entries),
        "ops": entries,
        "placements": placements,
        "integrity": [_violation_json(v) for v in rt.check_integrity()],
        "stores": {
            loc: {
                "ops": st.ops,
                "mean_latency": st.mean_latency,
                "metrics": _metrics_json(final.get(loc, StoreMetrics())),
            }
            for loc, st in rt.stats.items()
        },
    }
    return report, status


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def cmd_run(script_path, report_path=None, measure_wall_clock=False, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        wl = load_workload(script_path)
    except ScriptError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    report, status = run_workload(wl, wall_clock=measure_wall_clock)
    text = dump_report(report)
    if report_path:
        Path(report_path).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if status != EXIT_OK:
        failed = next(e for e in report["ops"] if e["status"] in ("error", "unexpected_success"))
        print(f"op {failed['index']} ({failed['op']}) failed: {failed.get('error', failed['status'])}", file=err)
    return status


# -- explain ----------------------------------------------------------------

def explain_lines(wl: Workload, entity: str, payload: float) -> tuple[list[str], int]:
    ent = wl.registry.entities[entity]
    # only stores a run could write to; external stubs never hold data
    candidates = sorted(loc for loc, desc in wl.registry.stores.items() if desc.kind == "embedded")
    try:
        d = choose_location(wl.registry, ent, payload, wl.metrics, wl.weights, candidates)
    except NoEligibleStore:
        lines = [f"{loc}\t-\tineligible: confidentiality" for loc in candidates]
        return lines, EXIT_DOMAIN
    lines = []
    for loc in d.eligible:
        t = d.terms[loc]
        line = (f"{loc}\t{d.scores[loc]:.6f}\ttransfer={t.transfer:.6f} load={t.load:.6f} "
                f"clients={t.clients:.6f} latency={t.latency:.6f}")
        if loc == d.chosen:
            line += "\t*"
        lines.append(line)
    lines += [f"{loc}\t-\tineligible: confidentiality" for loc in d.ineligible]
    return lines, EXIT_OK


def cmd_explain(script_path, entity, payload_bytes, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        wl = load_workload(script_path)
    except ScriptError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    if entity not in wl.registry.entities:
        print(f"error: unknown entity {entity!r}", file=err)
        return EXIT_INPUT
    if payload_bytes < 0:
        print("error: payload must be non-negative", file=err)
        return EXIT_INPUT
    lines, status = explain_lines(wl, entity, payload_bytes)
    for line in lines:
        print(line, file=out)
    if status != EXIT_OK:
        print(f"error: no eligible store for {entity}", file=err)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridorm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a schema file")
    p.add_argument("schema")

    p = sub.add_parser("run", help="replay a workload script and write a JSON report")
    p.add_argument("script")
    p.add_argument("--report", help="write the report here instead of standard output")
    p.add_argument("--measure-wall-clock", action="store_true",
                   help="time operations for real instead of using injected delays")

    p = sub.add_parser("explain", help="print the placement score table for one entity")
    p.add_argument("script")
    p.add_argument("--entity", required=True)
    p.add_argument("--payload", required=True, type=float, help="payload size in bytes")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.command == "validate":
        return cmd_validate(args.schema)
    if args.command == "run":
        return cmd_run(args.script, args.report, args.measure_wall_clock)
    return cmd_explain(args.script, args.entity, args.payload)


if __name__ == "__main__":
    sys.exit(main())
