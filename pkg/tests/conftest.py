"""Shared fixtures: the measured device and a helper that writes TOML configs."""
from __future__ import annotations

import textwrap

import pytest

from floquetcomb.model import FloquetModulation, default_device


@pytest.fixture(scope="session")
def dev():
    return default_device()


@pytest.fixture(scope="session")
def w(dev):
    return dev.mechanics.frequency


@pytest.fixture(scope="session")
def cav2(dev):
    return dev.cavity2


@pytest.fixture(scope="session")
def mod192(w):
    return FloquetModulation.from_beta(1.92, w)


@pytest.fixture
def write_config(tmp_path):
    """Write dedented TOML text to a file under ``tmp_path`` and return its path."""
    def _write(text: str, name: str = "run.toml"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text), encoding="utf-8")
        return path
    return _write


# --- acceptance criteria report -------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = (text, "PASS" if report.passed else "FAIL", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, status, secs = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {text}  ({secs:.1f} s)")
