import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _oracle_cache(request, tmp_path_factory, monkeypatch):
    # the acceptance suite reuses the user cache (trained models, oracle sweeps);
    # unit tests get a private one so they never depend on earlier runs
    if request.module.__name__.endswith("test_acceptance"):
        return
    if os.environ.get("FNQS_TEST_SHARED_CACHE") is None:
        monkeypatch.setenv("FNQS_CACHE", str(tmp_path_factory.getbasetemp() / "cache"))


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line; it is echoed at once and repeated in the session summary."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
