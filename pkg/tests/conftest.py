import numpy as np
import pytest

from occluseg.mask_core import rle_encode

_ACCEPTANCE = []


def rect(h, w, r0, r1, c0, c1):
    """Mask with rows r0..r1-1 and cols c0..c1-1 set."""
    a = np.zeros((h, w), dtype=bool)
    a[r0:r1, c0:c1] = True
    return rle_encode(a)


@pytest.fixture
def record_criterion():
    def record(name, passed, detail=""):
        _ACCEPTANCE.append((name, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
