import numpy as np
import pytest

import bqgraph as bq

_ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per numbered criterion; printed at session end."""

    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def lr_small():
    return bq.gen_synthetic_lr(3000, 128, seed=7, subdim=16, clusters=32)


@pytest.fixture(scope="session")
def lr_small_index(lr_small):
    return bq.build_index(lr_small, bq.BuildParams(m=8, ef_c=48))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
