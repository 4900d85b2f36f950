import pytest

from dfpsim.simcore import BACKENDS
from dfpsim.topology import MINI_PARAMS, FULL_PARAMS, build_topology


@pytest.fixture(scope="session")
def mini():
    return build_topology(MINI_PARAMS)


@pytest.fixture(scope="session")
def full():
    return build_topology(FULL_PARAMS)


@pytest.fixture(params=sorted(BACKENDS))
def engine_cls(request):
    return BACKENDS[request.param]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
