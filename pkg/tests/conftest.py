import numpy as np
import pytest

from conservstat.chart import Chart


def observed_order(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def smooth_periodic(chart: Chart, rng, modes: int = 3, amplitude: float = 0.5) -> np.ndarray:
    """Random trigonometric polynomial on a torus chart."""
    x, y = chart.x, chart.y / chart.rho
    out = np.zeros(chart.shape)
    for _ in range(modes):
        kx, ky = rng.integers(-2, 3, size=2)
        a, phase = rng.uniform(-1, 1), rng.uniform(0, 2 * np.pi)
        out += a * np.cos(2 * np.pi * (kx * x + ky * y) + phase)
    return amplitude * out / max(1.0, np.abs(out).max())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def torus64():
    return Chart.torus(64)


@pytest.fixture
def disk64():
    return Chart.disk(64)


# one PASS/FAIL line per acceptance criterion in the terminal summary
_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
