import pytest

from chafee_exit import domains, noise, pde_core

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def params():
    return pde_core.ModelParams(dt=0.01)


@pytest.fixture(scope="session")
def fine_params():
    return pde_core.ModelParams()


@pytest.fixture(scope="session")
def geom(params):
    return domains.DomainGeometry(params)


@pytest.fixture(scope="session")
def spec():
    return noise.default_spec(1.5, 32)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
