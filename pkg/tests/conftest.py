import pytest

from sentinel.ingest import ingest_text
from sentinel.simulator import CAMPAIGN_SHA256, generate_reference_log

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[crit] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_criteria.items()):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")


@pytest.fixture(scope="session")
def reference_log():
    return generate_reference_log()


@pytest.fixture(scope="session")
def reference_store(reference_log):
    store, report = ingest_text(reference_log)
    assert report.rejected == []
    return store


@pytest.fixture
def reference_path(tmp_path, reference_log):
    path = tmp_path / "osqueryd.results.log"
    path.write_text(reference_log, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def campaign_sha256():
    return CAMPAIGN_SHA256
