import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diststat.comm import spawn_world

settings.register_profile(
    "default", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

WORLD_SIZES = (1, 2, 4)


def run(world_size, program, *args, backend="inproc", **kwargs):
    return spawn_world(world_size, program, *args, backend=backend, **kwargs)


def run0(world_size, program, *args, **kwargs):
    """Rank 0's result."""
    return run(world_size, program, *args, **kwargs)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# acceptance summary: test_acceptance appends (label, passed, detail)
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")
