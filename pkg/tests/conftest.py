from __future__ import annotations

import pytest

from shuntcavity.core import EnclosureSpec

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}

A = 2e-3
EPS = 11.9


def table_cavity(r: float, side: float = 42e-3, counts=(20, 20)) -> EnclosureSpec:
    return EnclosureSpec.uniform(side, side, 0.5e-3, EPS, A, r, counts if r > 0 else (0, 0))


@pytest.fixture
def table_spec():
    return table_cavity


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
