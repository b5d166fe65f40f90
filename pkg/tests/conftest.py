import pytest

from agesirs.scenario import bundled_scenario, load_scenario

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            number, title = value
            detail = dict(report.user_properties).get("detail", "")
            _, passed, details = _CRITERIA.get(number, (title, True, []))
            if detail:
                details.append(detail)
            _CRITERIA[number] = (title, passed and report.outcome == "passed", details)


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        request.node.user_properties.append(("criterion", tuple(mark.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, details = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        detail = " | ".join(details)
        tr.write_line(f"criterion {number:2d} [{status}] {title}" + (f" :: {detail}" if detail else ""))


@pytest.fixture(scope="session")
def reference():
    return load_scenario(bundled_scenario("reference"))


@pytest.fixture(scope="session")
def saturating():
    return load_scenario(bundled_scenario("saturating"))
