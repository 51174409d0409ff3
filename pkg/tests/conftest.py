import importlib

import numpy as np
import pytest

from safab import _kernels_py

try:
    _compiled = importlib.import_module("safab._kernels")
except ImportError:
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    BACKENDS.append(pytest.param(_compiled, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per kernel implementation."""
    import safab.confset
    import safab.pr
    import safab.spending
    for mod in (safab.confset, safab.pr, safab.spending):
        monkeypatch.setattr(mod, "kernels", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
