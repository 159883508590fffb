import json
import subprocess
import sys
from importlib import resources

import pytest

from hybridorm.cli import main

from test_schema import STUDENTS_DOC

DEMO = resources.files("hybridorm") / "data" / "demo_script.json"


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc), encoding="utf-8")
    return str(path)


def script(schema=STUDENTS_DOC, **extra):
    doc = {"schema": schema, "ops": []}
    doc.update(extra)
    return doc


# -- validate ---------------------------------------------------------------

def test_validate_ok(tmp_path, capsys):
    assert main(["validate", write(tmp_path, "s.json", STUDENTS_DOC)]) == 0
    assert capsys.readouterr().out == ""


def test_validate_unresolved_target(tmp_path, capsys):
    doc = json.loads(json.dumps(STUDENTS_DOC))
    doc["entities"][0]["relations"] = [
        {"name": "friends", "kind": "one_to_many", "target": "Ghosts", "foreign_key": "x"}]
    assert main(["validate", write(tmp_path, "s.json", doc)]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 1 and lines[0].startswith("ERROR Students.friends: ")


def test_validate_descriptor_problem_is_a_diagnostic(tmp_path, capsys):
    doc = json.loads(json.dumps(STUDENTS_DOC))
    doc["entities"][0]["fields"][0]["pk"] = False
    assert main(["validate", write(tmp_path, "s.json", doc)]) == 1
    assert capsys.readouterr().out.startswith("ERROR Students: InvalidDescriptor")


def test_validate_malformed_json(tmp_path):
    assert main(["validate", write(tmp_path, "s.json", "{not json")]) == 2


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "absent.json")]) == 2


def test_validate_unknown_key(tmp_path):
    assert main(["validate", write(tmp_path, "s.json", {**STUDENTS_DOC, "version": 2})]) == 2


def test_bad_arguments():
    assert main(["frobnicate"]) == 2


# -- run --------------------------------------------------------------------

def test_run_demo_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["run", str(DEMO), "--report", str(a)]) == 0
    assert main(["run", str(DEMO), "--report", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["report_version"] == 1
    assert report["op_count"] == len(json.loads(DEMO.read_text())["ops"])
    assert report["integrity"] == []
    assert list(report) == ["report_version", "exit_status", "op_count", "ops", "placements", "integrity", "stores"]


def test_run_empty_ops(tmp_path, capsys):
    assert main(["run", write(tmp_path, "w.json", script())]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["op_count"] == 0 and report["ops"] == [] and report["integrity"] == []


def _ten_inserts():
    return script(
        stores={"private1": {"injected_delay": 0.002, "metrics": {"server_load": 0.3}},
                "public1": {"injected_delay": 0.001, "metrics": {"bandwidth": 500000}}},
        ops=[{"op": "insert", "entity": "Students",
              "values": {"id_student": i, "surname": "S", "name": "N", "birthday": "2000-01-0%d" % (i % 9 + 1),
                         "agv_sorce": 4}}
             for i in range(10)],
    )


def test_run_placements_are_argmin_consistent(tmp_path, capsys):
    assert main(["run", write(tmp_path, "w.json", _ten_inserts())]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["placements"]) == 10
    for p in report["placements"]:
        best = min(sorted(p["scores"]), key=lambda loc: (p["scores"][loc], loc))
        assert p["chosen"] == best
        assert report["ops"][p["op_index"]]["result"]["location"] == p["chosen"]


def test_run_expected_error(tmp_path, capsys):
    schema = json.loads((DEMO.parent / "demo_schema.json").read_text())
    doc = script(schema, ops=[{"op": "insert", "entity": "Students", "expect_error": True,
                               "values": {"id_student": 1, "surname": "S", "name": "N", "birthday": "2000-01-01",
                                          "agv_sorce": 4, "group_id": 77}}])
    assert main(["run", write(tmp_path, "w.json", doc)]) == 0
    entry = json.loads(capsys.readouterr().out)["ops"][0]
    assert entry["status"] == "expected_error" and entry["error"]["type"] == "DanglingForeignKey"


def test_run_fatal_error_stops(tmp_path, capsys):
    doc = script(ops=[
        {"op": "delete", "entity": "Students", "pk": 1, "location": "nowhere"},
        {"op": "check"},
    ])
    assert main(["run", write(tmp_path, "w.json", doc)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert [e["status"] for e in report["ops"]] == ["error", "skipped"]
    assert report["op_count"] == 2 and report["exit_status"] == 1


def test_run_unexpected_success_fails(tmp_path, capsys):
    doc = script(ops=[{"op": "check", "expect_error": True}])
    assert main(["run", write(tmp_path, "w.json", doc)]) == 1
    assert json.loads(capsys.readouterr().out)["ops"][0]["status"] == "unexpected_success"


@pytest.mark.parametrize("doc", [
    {"ops": []},
    {"schema": STUDENTS_DOC, "ops": [{"op": "explode"}]},
    {"schema": STUDENTS_DOC, "ops": [{"op": "select", "entity": "Nope"}]},
    {"schema": STUDENTS_DOC, "ops": [{"op": "select", "entity": "Students", "colour": "red"}]},
    {"schema": STUDENTS_DOC, "ops": [{"op": "select", "entity": "Students", "limit": -1}]},
    {"schema": STUDENTS_DOC, "ops": [], "stores": {"mars": {}}},
    {"schema": STUDENTS_DOC, "ops": [], "stores": {"public1": {"metrics": {"bandwidth": 0}}}},
    {"schema": STUDENTS_DOC, "ops": [], "policy": {"ewma_alpha": 2}},
])
def test_run_bad_script(tmp_path, doc):
    assert main(["run", write(tmp_path, "w.json", doc)]) == 2


def test_run_wall_clock_flag(tmp_path, capsys):
    assert main(["run", write(tmp_path, "w.json", _ten_inserts()), "--measure-wall-clock"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["stores"]["private1"]["mean_latency"] >= 0.002


def test_run_select_filter_decodes_dates(tmp_path, capsys):
    doc = _ten_inserts()
    doc["ops"].append({"op": "select", "entity": "Students", "filter": {"lt": ["birthday", "2000-01-03"]},
                       "sort": [["id_student", "desc"]]})
    assert main(["run", write(tmp_path, "w.json", doc)]) == 0
    result = json.loads(capsys.readouterr().out)["ops"][-1]["result"]
    assert [r["values"]["id_student"] for r in result["records"]] == [9, 1, 0]


# -- explain ----------------------------------------------------------------

def test_explain_equal_metrics_tie(tmp_path, capsys):
    path = write(tmp_path, "w.json", script())
    assert main(["explain", path, "--entity", "Students", "--payload", "100"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("private1\t") and lines[0].endswith("\t*")
    assert lines[1].startswith("public1\t") and not lines[1].endswith("*")
    assert lines[0].split("\t")[1] == lines[1].split("\t")[1]


def test_explain_worked_example(tmp_path, capsys):
    doc = script(
        {**STUDENTS_DOC, "stores": [{"location": "public1", "privacy": "public"}]},
        stores={"public1": {"metrics": {"bandwidth": 1e6, "server_load": 0.5, "active_clients": 10,
                                        "latency_ewma": 0.1}}},
        policy={"w_load": 0.05, "w_clients": 0.001},
    )
    assert main(["explain", write(tmp_path, "w.json", doc), "--entity", "Students", "--payload", "1000000"]) == 0
    [line] = capsys.readouterr().out.splitlines()
    assert line.split("\t")[:2] == ["public1", "1.135000"]
    assert line.split("\t")[2] == "transfer=1.000000 load=0.025000 clients=0.010000 latency=0.100000"


def test_explain_no_eligible(tmp_path, capsys):
    doc = json.loads(json.dumps(STUDENTS_DOC))
    doc["entities"][0]["confidentiality"] = "private_only"
    doc["stores"] = [{"location": "public1", "privacy": "public"}]
    assert main(["explain", write(tmp_path, "w.json", script(doc)), "--entity", "Students", "--payload", "1"]) == 1
    assert capsys.readouterr().out == "public1\t-\tineligible: confidentiality\n"


def test_explain_lists_ineligible(tmp_path, capsys):
    doc = json.loads(json.dumps(STUDENTS_DOC))
    doc["entities"][0]["confidentiality"] = "private_only"
    assert main(["explain", write(tmp_path, "w.json", script(doc)), "--entity", "Students", "--payload", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("private1\t") and out[0].endswith("*")
    assert out[1] == "public1\t-\tineligible: confidentiality"


def test_explain_unknown_entity(tmp_path):
    assert main(["explain", write(tmp_path, "w.json", script()), "--entity", "Nope", "--payload", "1"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybridorm", "run", str(DEMO)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["report_version"] == 1


def test_explain_skips_external_stores(capsys):
    assert main(["explain", str(DEMO), "--entity", "Courses", "--payload", "2000"]) == 0
    out = capsys.readouterr().out
    assert "archive" not in out
    assert [line.split("\t")[0] for line in out.splitlines()] == ["private1", "public1", "public2"]
