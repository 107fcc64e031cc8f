import json
from importlib import resources

import pytest

from mcloop.model import PhysicalConfig

CRITERIA = {}


def record_criterion(number, passed, detail):
    CRITERIA[number] = (passed, detail)


@pytest.fixture(scope="session")
def testbed():
    data = json.loads(resources.files("mcloop").joinpath("data/paper_testbed.json").read_text())
    return PhysicalConfig.from_dict(data["physical"])


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
