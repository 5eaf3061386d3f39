import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def perm_matrix(ranks):
    """P with P[r-1, i] = 1 when element i goes to rank r, so P @ x reorders x."""
    n = len(ranks)
    P = np.zeros((n, n), dtype=int)
    for i, r in enumerate(ranks):
        P[r - 1, i] = 1
    return P


# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
