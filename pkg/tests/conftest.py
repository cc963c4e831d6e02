import numpy as np
import pytest

from ndnet.nn import _backend

try:
    _backend.load("cython")
    BACKENDS = ["cython", "python"]
except ImportError:
    BACKENDS = ["python"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    before = _backend.BACKEND
    _backend.use(request.param)
    yield request.param
    _backend.use(before)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Shared list of criterion result lines, echoed again in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda ln: int(ln.split()[1])):
            terminalreporter.write_line(line)
