import pytest

from chainrbac.auth import generate_keypair
from chainrbac.clock import SimulatedClock, utc
from chainrbac.engine import Engine
from chainrbac.fixtures import load_fixture
from chainrbac.ledger import Ledger


@pytest.fixture
def clock():
    return SimulatedClock(utc(2021, 12, 22, 15, 0, 0))


@pytest.fixture
def ledger(clock):
    return Ledger(clock=clock)


@pytest.fixture
def engine(ledger, clock):
    return Engine(ledger, clock)


@pytest.fixture
def scenario(engine):
    load_fixture(engine)
    return engine


@pytest.fixture
def keys():
    return [generate_keypair(f"user-{i}") for i in range(8)]


# -- acceptance reporting -----------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal
# summary; ``record`` attaches measured values to that line.

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def record(request):
    marker = request.node.get_closest_marker("criterion")
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "ok": None, "notes": []})
    return entry["notes"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "ok": None, "notes": []})
    passed = rep.passed
    entry["ok"] = passed if entry["ok"] is None else entry["ok"] and passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"criterion {n:>2} {status}  {e['title']}" + (f"  [{notes}]" if notes else ""))
