import re

import pytest

from batchrecode.loss import Bernoulli
from batchrecode.expected_rank import build_table

GOLDEN_H = (0.0625, 0.25, 0.375, 0.25, 0.0625)
GOLDEN_T = (0.0, 2.25, 4.0, 6.0, 7.0)

_criteria = {}


@pytest.fixture(scope="session")
def golden_table():
    return build_table(Bernoulli(0.2), "inf", 4, 32)


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    failed = report.failed
    if report.when == "call" or failed:
        _criteria[key] = _criteria.get(key, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), ok in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name}: {'PASS' if ok else 'FAIL'}")
