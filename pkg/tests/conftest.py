import os

import pytest
from hypothesis import settings

settings.register_profile("hrmt", deadline=None, max_examples=60)
settings.load_profile("hrmt")

# one line per acceptance criterion, printed at the end of the session
CRITERIA = {}


def record(number, title, passed, detail):
    CRITERIA[number] = (title, passed, detail)
    print(f"criterion {number} [{title}]: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def criteria():
    return record


@pytest.fixture
def workers():
    return os.cpu_count() or 1


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        title, passed, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k} [{title}]: {'PASS' if passed else 'FAIL'} - {detail}")
