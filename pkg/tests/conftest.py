import numpy as np
import pytest

from needlelab.spectral import SpectralGrid


@pytest.fixture
def grid():
    return SpectralGrid(256, 40.0)


@pytest.fixture
def small_grid():
    return SpectralGrid(64, 2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Print and remember one pass/fail line for an acceptance criterion."""

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return passed

    return record
