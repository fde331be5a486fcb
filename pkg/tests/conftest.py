import re

import numpy as np
import pytest

N_CRITERIA = 12
_verdicts: dict[int, tuple[bool, str]] = {}
_started: set[int] = set()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record and assert one acceptance verdict: ``criterion(k, ok, detail)``."""
    m = re.search(r"criterion_(\d+)", request.node.name)
    if m:
        _started.add(int(m.group(1)))

    def check(k, ok, detail=""):
        ok = bool(ok)
        _verdicts[k] = (ok, detail)
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {k} failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _started:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k not in _started:
            continue
        ok, detail = _verdicts.get(k, (False, "raised before a verdict"))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
