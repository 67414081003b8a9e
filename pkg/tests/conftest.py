import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("drillnav", deadline=None, max_examples=200)
settings.load_profile("drillnav")


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
