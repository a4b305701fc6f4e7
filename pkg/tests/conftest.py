import warnings

import pytest

CRITERIA = 12


@pytest.fixture(autouse=True)
def _quiet_numba_cache():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=DeprecationWarning)
        yield


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: criterion(number, ok, detail)."""
    lines = request.config.__dict__.setdefault("_acceptance", {})

    def record(number, ok, detail):
        lines[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance")
    if lines is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        if n in lines:
            ok, detail = lines[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (not evaluated)")
