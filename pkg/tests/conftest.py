import numpy as np
import pytest

from epibound.graph import random_strongly_connected


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(seed, n):
    """Graph plus product-start marginals for a seeded random instance."""
    rng = np.random.default_rng(seed)
    g = random_strongly_connected(rng, n)
    return g, rng.random(n), rng


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record a criterion outcome; the lines are echoed in the terminal summary."""

    def record(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
