import pytest

from apblow.field import FieldConfig
from apblow.geometry import Domain, RegionParams, build_ball_system
from apblow.sampling import QuadratureSpec


@pytest.fixture(scope="session")
def system2():
    return build_ball_system(Domain(2), 0.49, 1000)


@pytest.fixture(scope="session")
def config2(system2):
    return FieldConfig.create(system2)


@pytest.fixture(scope="session")
def system3():
    return build_ball_system(Domain(3), 0.49, 100)


@pytest.fixture(scope="session")
def config3(system3):
    return FieldConfig.create(system3)


@pytest.fixture(scope="session")
def params2():
    return RegionParams(0.07)


@pytest.fixture
def quad():
    return QuadratureSpec(n_samples=4096, seed=11)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
