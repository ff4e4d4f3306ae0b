import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from obknn import LabelTable  # noqa: E402


@pytest.fixture
def abc():
    return LabelTable(("A", "B", "C"))


@pytest.fixture
def tri_store(abc):
    from obknn import Datastore

    return Datastore.build([((0, 0), 0), ((3, 4), 1), ((6, 8), 2)], abc)


_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}")
