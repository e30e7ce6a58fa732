import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tripleplateau.geometry import TargetTriangle  # noqa: E402

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")


@pytest.fixture
def equilateral():
    return TargetTriangle(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]))


@pytest.fixture
def scalene():
    return TargetTriangle(np.array([[0.0, 0.0], [1.3, 0.0], [0.45, 0.9]]))


@pytest.fixture
def obtuse():
    # angle at vertex 3 is about 138 degrees
    return TargetTriangle(np.array([[0.0, 0.0], [2.0, 0.0], [0.7, 0.35]]))
