"""
Replaying a workload script
===========================

The ``hybridorm`` command validates schemas, replays JSON workloads into a
report and explains placement costs. Here it is driven in-process on the
bundled demo files.
"""

import json
import os
import tempfile
from importlib import resources

from hybridorm.cli import main

data = resources.files("hybridorm") / "data"
print("validate:", main(["validate", str(data / "demo_schema.json")]))

with tempfile.TemporaryDirectory() as tmp:
    report_path = os.path.join(tmp, "report.json")
    status = main(["run", str(data / "demo_script.json"), "--report", report_path])
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)

print("run:", status, "ops:", report["op_count"], "integrity:", report["integrity"])
for entry in report["ops"][:6]:
    print(entry["index"], entry["op"], entry["status"])
for loc, stats in report["stores"].items():
    print(loc, stats)

###############################################################################
# Cost breakdown for placing a 2 kB student record. Public stores are listed
# as ineligible because students are confidential.

main(["explain", str(data / "demo_script.json"), "--entity", "Students", "--payload", "2000"])
main(["explain", str(data / "demo_script.json"), "--entity", "Courses", "--payload", "2000"])
