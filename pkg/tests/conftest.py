from pathlib import Path

import numpy as np
import pytest

from firewatch.region import uniform_region

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid8():
    return uniform_region(8, 8)


@pytest.fixture
def grid20():
    return uniform_region(20, 20)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def _report(num: int, ok: bool, detail: str) -> bool:
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[num] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
