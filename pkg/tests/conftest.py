import pytest

from hybridorm import SchemaRegistry, StoreDescriptor

import helpers


@pytest.fixture
def student_registry():
    reg = SchemaRegistry()
    reg.register_entity(helpers.student_entity())
    reg.register_store(StoreDescriptor("private1", "private"))
    reg.register_store(StoreDescriptor("public1", "public"))
    return reg


@pytest.fixture
def campus():
    return helpers.campus_registry()


def pytest_terminal_summary(terminalreporter):
    if not helpers.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(helpers.ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f" ({detail})" if detail else ""))
