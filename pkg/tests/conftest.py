import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from frem import rng
from frem.fixtures import get_fixture

# jitted kernels compile on first use, so per-example deadlines are meaningless
settings.register_profile("frem", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("frem")


@pytest.fixture
def gen():
    return rng.stream(12345, 99)


@pytest.fixture(scope="session")
def decay_fx():
    return get_fixture("decay")


@pytest.fixture(scope="session")
def bd_fx():
    return get_fixture("birth-death")


@pytest.fixture(scope="session")
def sir_fx():
    return get_fixture("sir")


def random_cloud(g, M, d, J=2, spread=3.0):
    """Real-valued points with random per-path statistics and log weights."""
    y = g.normal(scale=spread, size=(M, d))
    V = g.exponential(size=(M, 2 * J))
    return y, V, g.normal(scale=2.0, size=M)


# acceptance verdicts, echoed in the terminal summary

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
