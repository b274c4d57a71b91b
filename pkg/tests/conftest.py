import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nogear.model import validate_params  # noqa: E402
from oracles import COVERAGE_SETS  # noqa: E402


@pytest.fixture
def p1():
    return validate_params(0.6, 0.4, 0.75)


@pytest.fixture(params=COVERAGE_SETS, ids=lambda s: "-".join(map(str, s)))
def pset(request):
    return validate_params(*request.param)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record a pass/fail line for an acceptance criterion and return the verdict."""

    def record(criterion, ok, detail):
        line = f"acceptance criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE[str(criterion)] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda k: (int(k.split()[0].split("-")[0]), k)
    for k in sorted(_ACCEPTANCE, key=key):
        terminalreporter.write_line(_ACCEPTANCE[k])
