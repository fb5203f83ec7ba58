import numpy as np
import pytest

from weakseg.core import FrameLogPosteriors

_ACCEPTANCE = []


def record_criterion(name, ok, detail=""):
    _ACCEPTANCE.append((name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_post(rng, T, K, scale=1.0):
    return FrameLogPosteriors.from_scores(scale * rng.normal(size=(T, K)))
