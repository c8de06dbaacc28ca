from pathlib import Path

import pytest

from tdexplore.transition import System
from tdexplore.treebank import bundled_grammar, generate_corpus, read_bracketed, read_bracketed_file

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def acceptance_corpus():
    return generate_corpus(bundled_grammar("acceptance"), 300)


@pytest.fixture(scope="session")
def handwritten():
    return read_bracketed_file(DATA / "handwritten.txt")


@pytest.fixture
def snv():
    """(S (NP the cat) (VP sleeps))"""
    return read_bracketed("(S (NP the cat) (VP sleeps))")[0]


@pytest.fixture
def system():
    return System(("S", "NP", "VP"))


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion

_criteria: dict = {}


@pytest.fixture
def criterion(request):
    """Attach a one-line detail string to an acceptance test's summary line."""
    info = {"detail": ""}
    _criteria[request.node.nodeid] = info
    return info


def pytest_runtest_logreport(report):
    info = _criteria.get(report.nodeid)
    if info is None:
        return
    # setup counts too: the training experiments run in module fixtures
    if report.when in ("setup", "call"):
        info["duration"] = info.get("duration", 0.0) + report.duration
    if info.get("outcome", "passed") == "passed" and (report.when == "call" or report.outcome != "passed"):
        info["outcome"] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, info in _criteria.items():
        name = nodeid.rsplit("::", 1)[-1].removeprefix("test_")
        verdict = "PASS" if info.get("outcome") == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({info.get('duration', 0.0):.1f} s)  {info['detail']}")
