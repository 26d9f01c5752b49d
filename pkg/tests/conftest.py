import pytest

from cc_snapshot.cli import resolve_workload
from cc_snapshot.core import Ggid
from cc_snapshot.workload import parse_workload


def g(*members):
    return Ggid(tuple(members))


@pytest.fixture
def load():
    return resolve_workload


@pytest.fixture
def parse():
    return parse_workload


CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Records one PASS/FAIL line per acceptance criterion."""
    results = request.config.stash.setdefault(CRITERIA, {})

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        results[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(CRITERIA, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
