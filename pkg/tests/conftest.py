import math

import pytest

from orbinv import _backend, _kernels_py, jets

try:
    from orbinv import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernels_py, "cython": _compiled}


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per jet kernel backend."""
    mod = BACKENDS[request.param]
    if mod is None:
        pytest.skip("compiled kernels not built")
    monkeypatch.setattr(jets, "kernels", mod)
    return request.param


def rel(a, b, floor=1e-300):
    return abs(a - b) / max(abs(b), floor)


@pytest.fixture
def kepler_grid():
    from orbinv.bozis import polar_grid

    return polar_grid(0.4, 0.8, 6, 0.1, 2 * math.pi - 0.1, 12)


def pytest_report_header(config):
    return f"orbinv kernels: {_backend.BACKEND}"


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and fail on a miss."""

    def record(number, title, ok, detail):
        line = f"ACCEPTANCE {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
