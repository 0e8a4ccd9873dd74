import pytest

from chernprobe.model import MeasurementConfig, QuenchProtocol, mhz


@pytest.fixture
def base():
    """Omega1/2pi = 10 MHz, Delta1 = 3 Omega1, tq = 1 us."""
    return QuenchProtocol.from_mhz(30.0, 0.0, 1.0)


@pytest.fixture
def optimum():
    return QuenchProtocol.from_mhz(16.1, 0.0, 0.96)


@pytest.fixture
def optimum_cfg():
    return MeasurementConfig(kappa=mhz(0.37), feedback_mode="adiabatic")


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and fail the test if it failed."""
    def check(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: s.split("]", 1)[1]):
            terminalreporter.write_line(line)
