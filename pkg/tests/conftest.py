import numpy as np
import pytest

from causalgeo.geometry import CPoint

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_point(rng, n, lo=-0.5, hi=0.5) -> CPoint:
    z = rng.uniform(lo, hi, 2 * n)
    return CPoint.from_z(z, n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
