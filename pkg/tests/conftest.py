import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def explicit(m):
    """Mesh leaves as the plain tuples the oracles work on."""
    return [(int(lev), tuple(int(v) for v in a)) for lev, a in zip(m.levels, m.anchors)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:>4} {'PASS' if ok else 'FAIL'}  {detail}")
