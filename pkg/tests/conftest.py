import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def write(tmp_path: Path):
    """Write text to a file under tmp_path and return its path."""

    def _write(name: str, text: str) -> Path:
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


_acceptance = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_acceptance] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    report = outcome.get_result()
    number, title = marker.args
    results = item.config.stash[_acceptance]
    if report.when == "setup":
        # module fixtures (the end-to-end run) count towards the first criterion using them
        results[number] = (title, "PASS" if report.passed else "FAIL", call.duration)
    elif report.when == "call":
        results[number] = (title, "PASS" if report.passed else "FAIL", results[number][2] + call.duration)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_acceptance, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, verdict, seconds = results[number]
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {title} ({seconds:.1f}s)")
