import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tiered_rl.envcore import TabularMdp, generate_random_mdp, make_rng

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; echoed in the terminal summary."""
    def record(cid, ok, detail=""):
        line = f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def mdp333():
    return generate_random_mdp(3, 3, 3, make_rng(11))

