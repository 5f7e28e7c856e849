import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, echoed once more at the end of the run
VERDICTS = []


@pytest.fixture
def verdict():
    def record(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}"
        VERDICTS.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
