import numpy as np
import pytest

from wireid import kernels

BACKENDS = sorted(kernels.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    mod = kernels.available_backends()[request.param]
    for name in kernels.NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    lines = test_acceptance.ACCEPTANCE_LINES
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines.items()):
            terminalreporter.write_line(line)
