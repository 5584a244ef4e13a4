import pytest

from ipswsim.population import builtin_specs

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def specs():
    return builtin_specs()


@pytest.fixture(scope="session")
def criteria_log():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
