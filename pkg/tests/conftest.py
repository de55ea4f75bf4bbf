import numpy as np
import pytest
import torch

from lggan.data import VOID, SemanticMap


def random_semantic(rng: np.random.Generator, c: int, h: int, w: int, void_fraction: float = 0.0) -> SemanticMap:
    labels = rng.integers(0, c, size=(h, w))
    if void_fraction:
        labels[rng.random((h, w)) < void_fraction] = VOID
    return SemanticMap(torch.from_numpy(labels), c)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and report.when == "call":
        report.user_properties.append(("acceptance", marker.args))


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key == "acceptance":
            _ACCEPTANCE.append((value[0], value[1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration in sorted(_ACCEPTANCE):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number}. {title} ({duration:.1f} s)")
